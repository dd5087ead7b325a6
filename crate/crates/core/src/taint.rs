//! Byte-level taint labels and the operation-aware union table.
//!
//! Label layout:
//!
//! | label                  | meaning                                   |
//! |------------------------|-------------------------------------------|
//! | `0`                    | untainted / unknown concrete value        |
//! | `1..=16`               | reserved constants `8 * (label - 1)`      |
//! | `17 .. 17 + input_len` | input byte `label - 17`                   |
//! | above that             | union-table entries                       |
//! | `u32::MAX`             | [`OVERREAD`]: data read past end of input |
//!
//! Every union entry records `(op, operand1, operand2, size)`. For binary
//! ops both operands are labels and `size` is the operand size in bytes.
//! For casts `operand2` is the target size and `size` the source size; for
//! `uload` `operand2` is the byte count; for `extract` `operand2` is the bit
//! offset and `size` the extracted byte count; for `concat` `operand1` is the
//! high part, `operand2` the low part and `size` the result byte count.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BinOp, CastOp, UnOp};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaintLabel(pub u32);

pub const UNTAINTED: TaintLabel = TaintLabel(0);
pub const OVERREAD: TaintLabel = TaintLabel(u32::MAX);
pub const NUM_RESERVED_CONSTANTS: u32 = 16;
pub const FIRST_INPUT_LABEL: u32 = NUM_RESERVED_CONSTANTS + 1;
pub const DEFAULT_CAPACITY: usize = 1 << 24;

impl TaintLabel {
    pub fn is_tainted(self) -> bool {
        self.0 >= FIRST_INPUT_LABEL
    }

    pub fn is_untainted(self) -> bool {
        self.0 == 0
    }

    /// The constant a reserved label stands for.
    pub fn reserved_constant(self) -> Option<u64> {
        (1..=NUM_RESERVED_CONSTANTS)
            .contains(&self.0)
            .then(|| 8 * (self.0 as u64 - 1))
    }
}

impl fmt::Display for TaintLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == OVERREAD {
            f.write_str("l-1")
        } else {
            write!(f, "l{}", self.0)
        }
    }
}

/// Label reserved for `value`, or 0 when the value is not one of `8 * i`,
/// `i` in `0..16`.
pub fn constant_label(value: u64) -> TaintLabel {
    if value.is_multiple_of(8) && value / 8 < NUM_RESERVED_CONSTANTS as u64 {
        TaintLabel(1 + (value / 8) as u32)
    } else {
        UNTAINTED
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaintOp {
    Not,
    Neg,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Ashr,
    Add,
    Sub,
    Mul,
    Udiv,
    Sdiv,
    Urem,
    Srem,
    Trunc,
    Zext,
    Sext,
    Uload,
    Extract,
    Concat,
}

impl TaintOp {
    pub const ALL: [TaintOp; 21] = [
        TaintOp::Not,
        TaintOp::Neg,
        TaintOp::And,
        TaintOp::Or,
        TaintOp::Xor,
        TaintOp::Shl,
        TaintOp::Lshr,
        TaintOp::Ashr,
        TaintOp::Add,
        TaintOp::Sub,
        TaintOp::Mul,
        TaintOp::Udiv,
        TaintOp::Sdiv,
        TaintOp::Urem,
        TaintOp::Srem,
        TaintOp::Trunc,
        TaintOp::Zext,
        TaintOp::Sext,
        TaintOp::Uload,
        TaintOp::Extract,
        TaintOp::Concat,
    ];

    pub fn code(self) -> u8 {
        TaintOp::ALL.iter().position(|o| *o == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<TaintOp> {
        TaintOp::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaintOp::Not => "not",
            TaintOp::Neg => "neg",
            TaintOp::And => "and",
            TaintOp::Or => "or",
            TaintOp::Xor => "xor",
            TaintOp::Shl => "shl",
            TaintOp::Lshr => "lshr",
            TaintOp::Ashr => "ashr",
            TaintOp::Add => "add",
            TaintOp::Sub => "sub",
            TaintOp::Mul => "mul",
            TaintOp::Udiv => "udiv",
            TaintOp::Sdiv => "sdiv",
            TaintOp::Urem => "urem",
            TaintOp::Srem => "srem",
            TaintOp::Trunc => "trunc",
            TaintOp::Zext => "zext",
            TaintOp::Sext => "sext",
            TaintOp::Uload => "uload",
            TaintOp::Extract => "extract",
            TaintOp::Concat => "concat",
        }
    }

    pub fn as_binop(self) -> Option<BinOp> {
        Some(match self {
            TaintOp::And => BinOp::And,
            TaintOp::Or => BinOp::Or,
            TaintOp::Xor => BinOp::Xor,
            TaintOp::Shl => BinOp::Shl,
            TaintOp::Lshr => BinOp::Lshr,
            TaintOp::Ashr => BinOp::Ashr,
            TaintOp::Add => BinOp::Add,
            TaintOp::Sub => BinOp::Sub,
            TaintOp::Mul => BinOp::Mul,
            TaintOp::Udiv => BinOp::Udiv,
            TaintOp::Sdiv => BinOp::Sdiv,
            TaintOp::Urem => BinOp::Urem,
            TaintOp::Srem => BinOp::Srem,
            _ => return None,
        })
    }

    pub fn as_unop(self) -> Option<UnOp> {
        match self {
            TaintOp::Not => Some(UnOp::Not),
            TaintOp::Neg => Some(UnOp::Neg),
            _ => None,
        }
    }

    pub fn as_cast(self) -> Option<CastOp> {
        match self {
            TaintOp::Trunc => Some(CastOp::Trunc),
            TaintOp::Zext => Some(CastOp::Zext),
            TaintOp::Sext => Some(CastOp::Sext),
            _ => None,
        }
    }

    /// Whether `operand2` holds a label (as opposed to an immediate).
    pub fn operand2_is_label(self) -> bool {
        self.as_binop().is_some() || self == TaintOp::Concat
    }
}

impl From<BinOp> for TaintOp {
    fn from(op: BinOp) -> Self {
        match op {
            BinOp::And => TaintOp::And,
            BinOp::Or => TaintOp::Or,
            BinOp::Xor => TaintOp::Xor,
            BinOp::Shl => TaintOp::Shl,
            BinOp::Lshr => TaintOp::Lshr,
            BinOp::Ashr => TaintOp::Ashr,
            BinOp::Add => TaintOp::Add,
            BinOp::Sub => TaintOp::Sub,
            BinOp::Mul => TaintOp::Mul,
            BinOp::Udiv => TaintOp::Udiv,
            BinOp::Sdiv => TaintOp::Sdiv,
            BinOp::Urem => TaintOp::Urem,
            BinOp::Srem => TaintOp::Srem,
        }
    }
}

impl From<UnOp> for TaintOp {
    fn from(op: UnOp) -> Self {
        match op {
            UnOp::Not => TaintOp::Not,
            UnOp::Neg => TaintOp::Neg,
        }
    }
}

impl From<CastOp> for TaintOp {
    fn from(op: CastOp) -> Self {
        match op {
            CastOp::Trunc => TaintOp::Trunc,
            CastOp::Zext => TaintOp::Zext,
            CastOp::Sext => TaintOp::Sext,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnionEntry {
    pub op: TaintOp,
    pub operand1: TaintLabel,
    pub operand2: u32,
    pub size: u8,
}

impl UnionEntry {
    pub fn new(op: TaintOp, operand1: TaintLabel, operand2: u32, size: u8) -> Self {
        UnionEntry {
            op,
            operand1,
            operand2,
            size,
        }
    }

    /// Byte width of the value this entry produces.
    pub fn result_size(&self) -> u32 {
        match self.op {
            TaintOp::Trunc | TaintOp::Zext | TaintOp::Sext | TaintOp::Uload => self.operand2,
            _ => self.size as u32,
        }
    }

    /// Labels this entry refers to.
    pub fn children(&self) -> impl Iterator<Item = TaintLabel> {
        let second = self.op.operand2_is_label().then_some(TaintLabel(self.operand2));
        std::iter::once(self.operand1).chain(second)
    }
}

impl fmt::Display for UnionEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.op.operand2_is_label() {
            write!(
                f,
                "({}, {}, {}, {})",
                self.op.name(),
                self.operand1,
                TaintLabel(self.operand2),
                self.size
            )
        } else {
            write!(
                f,
                "({}, {}, {}, {})",
                self.op.name(),
                self.operand1,
                self.operand2,
                self.size
            )
        }
    }
}

/// Which label-saving optimizations the tracker applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintConfig {
    pub common_constants: bool,
    pub uload: bool,
    pub lazy_store: bool,
    pub folding: bool,
    pub dedup: bool,
    pub capacity: usize,
}

impl Default for TaintConfig {
    fn default() -> Self {
        TaintConfig {
            common_constants: true,
            uload: true,
            lazy_store: true,
            folding: true,
            dedup: true,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

impl TaintConfig {
    pub fn unoptimized() -> Self {
        TaintConfig {
            common_constants: false,
            uload: false,
            lazy_store: false,
            folding: false,
            dedup: false,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TaintError {
    #[error("union table capacity of {0} entries exhausted")]
    CapacityExhausted(usize),
}

/// Append-only table of union entries with a reverse lookup for dedup.
#[derive(Clone, Debug)]
pub struct UnionTable {
    input_len: usize,
    entries: Vec<UnionEntry>,
    dedup: HashMap<UnionEntry, TaintLabel>,
    config: TaintConfig,
}

impl UnionTable {
    pub fn new(input_len: usize, config: TaintConfig) -> Self {
        UnionTable {
            input_len,
            entries: Vec::new(),
            dedup: HashMap::new(),
            config,
        }
    }

    /// Rebuild a table from serialized entries (labels must be contiguous
    /// from the union base).
    pub fn from_entries(input_len: usize, entries: Vec<UnionEntry>) -> Self {
        let mut t = UnionTable::new(input_len, TaintConfig::default());
        for e in entries {
            let label = t.next_label();
            t.dedup.entry(e).or_insert(label);
            t.entries.push(e);
        }
        t
    }

    pub fn config(&self) -> &TaintConfig {
        &self.config
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn union_base(&self) -> u32 {
        FIRST_INPUT_LABEL + self.input_len as u32
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (TaintLabel, &UnionEntry)> {
        let base = self.union_base();
        self.entries
            .iter()
            .enumerate()
            .map(move |(i, e)| (TaintLabel(base + i as u32), e))
    }

    fn next_label(&self) -> TaintLabel {
        TaintLabel(self.union_base() + self.entries.len() as u32)
    }

    pub fn input_label(&self, offset: usize) -> TaintLabel {
        if offset < self.input_len {
            TaintLabel(FIRST_INPUT_LABEL + offset as u32)
        } else {
            OVERREAD
        }
    }

    /// Input offset a label stands for, if it is an input byte label.
    pub fn input_offset(&self, label: TaintLabel) -> Option<usize> {
        (label.0 >= FIRST_INPUT_LABEL && label.0 < self.union_base())
            .then(|| (label.0 - FIRST_INPUT_LABEL) as usize)
    }

    pub fn entry(&self, label: TaintLabel) -> Option<&UnionEntry> {
        let base = self.union_base();
        if label == OVERREAD || label.0 < base {
            return None;
        }
        self.entries.get((label.0 - base) as usize)
    }

    /// Reserved-constant label for a concrete operand, honoring the config.
    pub fn concrete_label(&self, value: u64) -> TaintLabel {
        if self.config.common_constants {
            constant_label(value)
        } else {
            UNTAINTED
        }
    }

    /// Byte width of the value a tainted label stands for.
    pub fn label_size(&self, label: TaintLabel) -> Option<u32> {
        if self.input_offset(label).is_some() {
            Some(1)
        } else {
            self.entry(label).map(UnionEntry::result_size)
        }
    }

    fn allocate(&mut self, entry: UnionEntry) -> Result<TaintLabel, TaintError> {
        if self.config.dedup {
            if let Some(l) = self.dedup.get(&entry) {
                return Ok(*l);
            }
        }
        if self.entries.len() >= self.config.capacity
            || self.next_label().0 >= OVERREAD.0 - 1
        {
            return Err(TaintError::CapacityExhausted(self.config.capacity));
        }
        let label = self.next_label();
        self.entries.push(entry);
        if self.config.dedup {
            self.dedup.insert(entry, label);
        }
        Ok(label)
    }

    /// Merge two labels under `op`. For binary ops and `concat` both operands
    /// are labels; for the other ops `operand2` is an immediate.
    pub fn union(
        &mut self,
        op: TaintOp,
        l1: TaintLabel,
        operand2: u32,
        size: u8,
    ) -> Result<TaintLabel, TaintError> {
        let l2 = TaintLabel(operand2);
        if l1 == OVERREAD || (op.operand2_is_label() && l2 == OVERREAD) {
            return Ok(OVERREAD);
        }
        if op.operand2_is_label() {
            if !l1.is_tainted() && !l2.is_tainted() {
                return Ok(UNTAINTED);
            }
            if self.config.folding {
                if let Some(folded) = self.fold(op, l1, l2, size) {
                    return Ok(folded);
                }
            }
        } else if !l1.is_tainted() {
            return Ok(UNTAINTED);
        }
        self.allocate(UnionEntry::new(op, l1, operand2, size))
    }

    // x = (y op c1) op c2 with both constants unknown: reuse y op c1's label.
    fn fold(&self, op: TaintOp, l1: TaintLabel, l2: TaintLabel, size: u8) -> Option<TaintLabel> {
        if !op.as_binop().is_some_and(BinOp::is_foldable) {
            return None;
        }
        let tainted = match (l1.is_untainted(), l2.is_untainted()) {
            (true, false) => l2,
            (false, true) => l1,
            _ => return None,
        };
        let e = self.entry(tainted)?;
        let same_shape = e.op == op
            && e.size == size
            && (e.operand1.is_untainted() || TaintLabel(e.operand2).is_untainted());
        same_shape.then_some(tainted)
    }

    /// Every union label reachable from `root`, ascending. Input and constant
    /// labels are not included.
    pub fn reachable(&self, root: TaintLabel) -> Vec<TaintLabel> {
        reachable_from(self, &[root])
    }

    /// Whether OVERREAD appears anywhere below `root`.
    pub fn reaches_overread(&self, root: TaintLabel) -> bool {
        root == OVERREAD
            || self.reachable(root).iter().any(|l| {
                self.entry(*l)
                    .is_some_and(|e| e.children().any(|c| c == OVERREAD))
            })
    }

    /// Reachable slice as `[u32 label][u8 op][u32 operand1][u32 operand2][u8 size]`
    /// records, little-endian, ascending by label.
    pub fn serialize_slice(&self, roots: &[TaintLabel]) -> Vec<u8> {
        let mut out = Vec::new();
        for l in reachable_from(self, roots) {
            let e = self.entry(l).unwrap();
            out.extend_from_slice(&l.0.to_le_bytes());
            out.push(e.op.code());
            out.extend_from_slice(&e.operand1.0.to_le_bytes());
            out.extend_from_slice(&e.operand2.to_le_bytes());
            out.push(e.size);
        }
        out
    }
}

/// Read access to union entries, implemented by the live table and by
/// slices decoded from a sketch log. A label of 17 or more without an entry
/// (and not OVERREAD) is an input byte.
pub trait LabelGraph {
    fn lookup(&self, label: TaintLabel) -> Option<UnionEntry>;

    fn input_offset_of(&self, label: TaintLabel) -> Option<usize> {
        (label.0 >= FIRST_INPUT_LABEL && label != OVERREAD && self.lookup(label).is_none())
            .then(|| (label.0 - FIRST_INPUT_LABEL) as usize)
    }
}

impl LabelGraph for UnionTable {
    fn lookup(&self, label: TaintLabel) -> Option<UnionEntry> {
        self.entry(label).copied()
    }
}

impl LabelGraph for std::collections::BTreeMap<TaintLabel, UnionEntry> {
    fn lookup(&self, label: TaintLabel) -> Option<UnionEntry> {
        self.get(&label).copied()
    }
}

/// Union labels reachable from any of `roots`, ascending.
pub fn reachable_from<G: LabelGraph + ?Sized>(graph: &G, roots: &[TaintLabel]) -> Vec<TaintLabel> {
    let mut seen = std::collections::BTreeSet::new();
    let mut stack = roots.to_vec();
    while let Some(l) = stack.pop() {
        if let Some(e) = graph.lookup(l) {
            if seen.insert(l) {
                stack.extend(e.children());
            }
        }
    }
    seen.into_iter().collect()
}

pub const SLICE_RECORD_LEN: usize = 14;

/// Parse records produced by [`UnionTable::serialize_slice`].
pub fn parse_slice(bytes: &[u8]) -> Option<Vec<(TaintLabel, UnionEntry)>> {
    if !bytes.len().is_multiple_of(SLICE_RECORD_LEN) {
        return None;
    }
    bytes
        .chunks_exact(SLICE_RECORD_LEN)
        .map(|r| {
            let label = TaintLabel(u32::from_le_bytes(r[0..4].try_into().ok()?));
            let op = TaintOp::from_code(r[4])?;
            let o1 = TaintLabel(u32::from_le_bytes(r[5..9].try_into().ok()?));
            let o2 = u32::from_le_bytes(r[9..13].try_into().ok()?);
            Some((label, UnionEntry::new(op, o1, o2, r[13])))
        })
        .collect()
}

/// Shadow state of one memory byte. `whole` is the byte size of the value
/// stored as a unit (0 for byte-granular labels) and `index` the byte's
/// position inside it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ShadowByte {
    pub label: TaintLabel,
    pub whole: u8,
    pub index: u8,
}

#[derive(Clone, Debug)]
pub struct ShadowMemory {
    bytes: Vec<ShadowByte>,
}

impl ShadowMemory {
    pub fn new(size: usize) -> Self {
        ShadowMemory {
            bytes: vec![ShadowByte::default(); size],
        }
    }

    pub fn byte(&self, addr: usize) -> ShadowByte {
        self.bytes[addr % self.bytes.len()]
    }

    fn set(&mut self, addr: usize, b: ShadowByte) {
        let n = self.bytes.len();
        self.bytes[addr % n] = b;
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Label for the byte-granular shadow entry `b`, emitting an extract when the
/// byte is part of a whole stored value.
fn byte_label(table: &mut UnionTable, b: ShadowByte) -> Result<TaintLabel, TaintError> {
    if b.whole <= 1 || !b.label.is_tainted() {
        Ok(b.label)
    } else {
        table.union(TaintOp::Extract, b.label, 8 * b.index as u32, 1)
    }
}

/// Little-endian concatenation of per-byte labels, low byte first.
fn concat_bytes(table: &mut UnionTable, labels: &[TaintLabel]) -> Result<TaintLabel, TaintError> {
    let mut acc = labels[0];
    for (i, hi) in labels.iter().enumerate().skip(1) {
        acc = table.union(TaintOp::Concat, *hi, acc.0, (i + 1) as u8)?;
    }
    Ok(acc)
}

/// Label of `size` input bytes read starting at `offset`.
pub fn input_labels(table: &mut UnionTable, offset: u64, size: u32) -> Result<TaintLabel, TaintError> {
    if offset.saturating_add(size as u64) > table.input_len() as u64 {
        return Ok(OVERREAD);
    }
    let first = table.input_label(offset as usize);
    if size == 1 {
        return Ok(first);
    }
    if table.config().uload {
        return table.union(TaintOp::Uload, first, size, size as u8);
    }
    let labels: Vec<TaintLabel> = (0..size).map(|i| TaintLabel(first.0 + i)).collect();
    concat_bytes(table, &labels)
}

/// Label of a `size`-byte load at `addr`.
pub fn load_labels(
    table: &mut UnionTable,
    shadow: &ShadowMemory,
    addr: usize,
    size: u32,
) -> Result<TaintLabel, TaintError> {
    let bytes: Vec<ShadowByte> = (0..size as usize).map(|i| shadow.byte(addr + i)).collect();
    if bytes.iter().all(|b| b.label.is_untainted()) {
        return Ok(UNTAINTED);
    }
    if bytes.iter().any(|b| b.label == OVERREAD) {
        return Ok(OVERREAD);
    }
    if size == 1 {
        return byte_label(table, bytes[0]);
    }
    let first = bytes[0];
    let one_store = bytes.iter().enumerate().all(|(i, b)| {
        b.label == first.label && b.whole == first.whole && b.index as usize == first.index as usize + i
    });
    if one_store && first.whole > 1 {
        if first.whole as u32 == size && first.index == 0 {
            return Ok(first.label);
        }
        return table.union(TaintOp::Extract, first.label, 8 * first.index as u32, size as u8);
    }
    if table.config().uload && table.input_offset(first.label).is_some() {
        let consecutive = bytes
            .iter()
            .enumerate()
            .all(|(i, b)| b.whole <= 1 && b.label.0 == first.label.0 + i as u32 && table.input_offset(b.label).is_some());
        if consecutive {
            return table.union(TaintOp::Uload, first.label, size, size as u8);
        }
    }
    let labels = bytes
        .iter()
        .map(|b| byte_label(table, *b))
        .collect::<Result<Vec<_>, _>>()?;
    concat_bytes(table, &labels)
}

/// Record the shadow of a `size`-byte store of a value labeled `label`.
pub fn store_labels(
    table: &mut UnionTable,
    shadow: &mut ShadowMemory,
    addr: usize,
    size: u32,
    label: TaintLabel,
) -> Result<(), TaintError> {
    let plain = |l: TaintLabel| ShadowByte {
        label: l,
        whole: 0,
        index: 0,
    };
    if !label.is_tainted() || size == 1 {
        let l = if label == OVERREAD || label.is_tainted() { label } else { UNTAINTED };
        for i in 0..size as usize {
            shadow.set(addr + i, plain(l));
        }
        return Ok(());
    }
    if let Some(e) = table.entry(label).copied() {
        if e.op == TaintOp::Uload && e.operand2 == size {
            for i in 0..size {
                shadow.set(addr + i as usize, plain(TaintLabel(e.operand1.0 + i)));
            }
            return Ok(());
        }
    }
    if table.config().lazy_store {
        for i in 0..size as usize {
            shadow.set(
                addr + i,
                ShadowByte {
                    label,
                    whole: size as u8,
                    index: i as u8,
                },
            );
        }
    } else {
        for i in 0..size as usize {
            let l = table.union(TaintOp::Extract, label, 8 * i as u32, 1)?;
            shadow.set(addr + i, plain(l));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(len: usize) -> UnionTable {
        UnionTable::new(len, TaintConfig::default())
    }

    #[test]
    fn input_label_layout() {
        let t = table(4);
        assert_eq!(t.input_label(0), TaintLabel(17));
        assert_eq!(t.input_label(3), TaintLabel(20));
        assert_eq!(t.input_label(4), OVERREAD);
        assert_eq!(t.union_base(), 21);
    }

    #[test]
    fn reserved_constants() {
        assert_eq!(constant_label(0), TaintLabel(1));
        assert_eq!(constant_label(32), TaintLabel(5));
        assert_eq!(constant_label(120), TaintLabel(16));
        assert_eq!(constant_label(128), UNTAINTED);
        assert_eq!(constant_label(7), UNTAINTED);
        assert_eq!(TaintLabel(5).reserved_constant(), Some(32));
    }

    #[test]
    fn dedup_returns_same_label() {
        let mut t = table(64);
        let a = t.union(TaintOp::And, UNTAINTED, 17, 1).unwrap();
        let b = t.union(TaintOp::And, UNTAINTED, 17, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn folding_add_chain() {
        let mut t = table(4);
        let la = t.union(TaintOp::Zext, TaintLabel(17), 4, 1).unwrap();
        let inner = t.union(TaintOp::Add, la, 0, 4).unwrap();
        let outer = t.union(TaintOp::Add, inner, 0, 4).unwrap();
        assert_eq!(inner, outer);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn shl_is_not_folded() {
        let mut t = table(4);
        let l = t.union(TaintOp::Zext, TaintLabel(17), 4, 1).unwrap();
        let s1 = t.union(TaintOp::Shl, l, 0, 4).unwrap();
        let s2 = t.union(TaintOp::Shl, s1, constant_label(0).0, 4).unwrap();
        assert_ne!(s1, s2);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn reserved_constant_blocks_folding() {
        let mut t = table(4);
        let l = t.union(TaintOp::Zext, TaintLabel(17), 4, 1).unwrap();
        let a = t.union(TaintOp::Add, l, 0, 4).unwrap();
        let b = t.union(TaintOp::Add, a, constant_label(8).0, 4).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn overread_absorbs() {
        let mut t = table(4);
        assert_eq!(t.union(TaintOp::Add, OVERREAD, 17, 4).unwrap(), OVERREAD);
        assert_eq!(t.union(TaintOp::Add, TaintLabel(17), OVERREAD.0, 1).unwrap(), OVERREAD);
        assert_eq!(t.union(TaintOp::Zext, OVERREAD, 4, 1).unwrap(), OVERREAD);
        assert!(t.is_empty());
    }

    #[test]
    fn capacity_exhaustion() {
        let mut t = UnionTable::new(
            4,
            TaintConfig {
                capacity: 2,
                ..TaintConfig::default()
            },
        );
        t.union(TaintOp::Not, TaintLabel(17), 0, 1).unwrap();
        t.union(TaintOp::Not, TaintLabel(18), 0, 1).unwrap();
        assert_eq!(
            t.union(TaintOp::Not, TaintLabel(19), 0, 1),
            Err(TaintError::CapacityExhausted(2))
        );
    }

    #[test]
    fn uload_of_consecutive_input_bytes() {
        let mut t = table(8);
        let mut mem = ShadowMemory::new(64);
        for i in 0..4 {
            mem.set(
                i,
                ShadowByte {
                    label: TaintLabel(17 + i as u32),
                    ..Default::default()
                },
            );
        }
        let l = load_labels(&mut t, &mem, 0, 4).unwrap();
        assert_eq!(*t.entry(l).unwrap(), UnionEntry::new(TaintOp::Uload, TaintLabel(17), 4, 4));
        assert_eq!(load_labels(&mut t, &mem, 32, 4).unwrap(), UNTAINTED);
    }

    #[test]
    fn uload_store_unpacks_bytes() {
        let mut t = table(8);
        let mut mem = ShadowMemory::new(64);
        let l = input_labels(&mut t, 0, 4).unwrap();
        store_labels(&mut t, &mut mem, 8, 4, l).unwrap();
        let before = t.len();
        assert_eq!(load_labels(&mut t, &mem, 8, 1).unwrap(), TaintLabel(17));
        assert_eq!(load_labels(&mut t, &mem, 8, 4).unwrap(), l);
        assert_eq!(t.len(), before);
    }

    #[test]
    fn lazy_store_round_trip_and_extract() {
        let mut t = table(8);
        let mut mem = ShadowMemory::new(64);
        let x = input_labels(&mut t, 0, 4).unwrap();
        let l81 = t.union(TaintOp::Add, x, 0, 4).unwrap();
        store_labels(&mut t, &mut mem, 0, 4, l81).unwrap();
        let before = t.len();
        assert_eq!(load_labels(&mut t, &mem, 0, 4).unwrap(), l81);
        assert_eq!(t.len(), before);
        let b1 = load_labels(&mut t, &mem, 1, 1).unwrap();
        assert_eq!(*t.entry(b1).unwrap(), UnionEntry::new(TaintOp::Extract, l81, 8, 1));
        assert_eq!(t.len(), before + 1);
    }

    #[test]
    fn unoptimized_load_store_uses_bytes() {
        let mut t = UnionTable::new(8, TaintConfig::unoptimized());
        let mut mem = ShadowMemory::new(64);
        let x = input_labels(&mut t, 0, 4).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.entry(x).unwrap().op, TaintOp::Concat);
        store_labels(&mut t, &mut mem, 0, 4, x).unwrap();
        assert_eq!(t.len(), 7);
        load_labels(&mut t, &mem, 0, 4).unwrap();
        assert_eq!(t.len(), 10);
    }

    #[test]
    fn slice_serialization() {
        let mut t = table(4);
        let a = t.union(TaintOp::And, UNTAINTED, 17, 1).unwrap();
        let _unrelated = t.union(TaintOp::Not, TaintLabel(19), 0, 1).unwrap();
        let z = t.union(TaintOp::Zext, a, 4, 1).unwrap();
        let bytes = t.serialize_slice(&[z]);
        assert_eq!(bytes.len(), 2 * SLICE_RECORD_LEN);
        let parsed = parse_slice(&bytes).unwrap();
        assert_eq!(parsed[0].0, a);
        assert_eq!(parsed[1], (z, *t.entry(z).unwrap()));
    }

    #[test]
    fn reachable_shares_subtrees() {
        let mut t = table(4);
        let a = t.union(TaintOp::Not, TaintLabel(17), 0, 1).unwrap();
        let b = t.union(TaintOp::Add, a, TaintLabel(18).0, 1).unwrap();
        let c = t.union(TaintOp::Xor, a, b.0, 1).unwrap();
        assert_eq!(t.reachable(c), vec![a, b, c]);
    }
}
