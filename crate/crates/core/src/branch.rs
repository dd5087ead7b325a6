//! Stable instruction ids, call-stack contexts and AFL-style edge coverage.
//!
//! An instruction's id is the FNV-1a hash of its `file:line:column`
//! location, so the plain and tainted interpreters agree on it. The calling
//! context is the xor of the ids of all active callsites; xoring the same
//! callsite again on return pops it.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{Inst, Location, Program};

pub const MAP_SIZE: usize = 1 << 16;

const FNV_OFFSET: u32 = 0x811c_9dc5;
const FNV_PRIME: u32 = 0x0100_0193;

pub fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ *b as u32).wrapping_mul(FNV_PRIME))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sid(pub u32);

/// Hash of `file:line:column`, with `:value` appended when a disambiguator
/// is given.
pub fn sid(loc: &Location, disambiguator: Option<u64>) -> Sid {
    let key = match disambiguator {
        None => format!("{}:{}:{}", loc.file, loc.line, loc.column),
        Some(v) => format!("{}:{}:{}:{}", loc.file, loc.line, loc.column, v),
    };
    Sid(fnv1a32(key.as_bytes()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Context(pub u32);

impl Context {
    pub const EMPTY: Context = Context(0);

    /// Enter or leave `callsite`; the update is its own inverse.
    pub fn update(self, callsite: Sid) -> Context {
        Context(self.0 ^ callsite.0)
    }
}

pub fn update_context(ctx: Context, callsite: Sid) -> Context {
    ctx.update(callsite)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

pub fn branch_id(ctx: Context, s: Sid) -> BranchId {
    BranchId(ctx.0 ^ s.0)
}

/// Ids for every comparison site, callsite and control-flow target in a
/// program. Comparison and call ids are unique module-wide: switch cases
/// append their case value, any remaining collision appends a counter.
#[derive(Clone, Debug)]
pub struct SiteIds {
    /// Per function, per instruction: the site id used for `cmp` and `call`.
    pub site: Vec<Vec<Sid>>,
    /// Per function, per instruction: one id per switch case (empty otherwise).
    pub cases: Vec<Vec<Vec<Sid>>>,
    /// Per function, per instruction: the block id used for edge coverage.
    pub block: Vec<Vec<u32>>,
}

impl SiteIds {
    pub fn assign(program: &Program) -> SiteIds {
        let mut used: HashSet<Sid> = HashSet::new();
        let mut unique = |loc: &Location, first: Option<u64>| -> Sid {
            let mut s = sid(loc, first);
            let mut salt = 0u64;
            while !used.insert(s) {
                salt += 1;
                let key = format!(
                    "{}:{}:{}:{}#{salt}",
                    loc.file,
                    loc.line,
                    loc.column,
                    first.unwrap_or(0)
                );
                s = Sid(fnv1a32(key.as_bytes()));
            }
            s
        };
        let mut site = Vec::new();
        let mut cases = Vec::new();
        let mut block = Vec::new();
        for f in &program.functions {
            let mut fs = Vec::with_capacity(f.body.len());
            let mut fc = Vec::with_capacity(f.body.len());
            let mut fb = Vec::with_capacity(f.body.len());
            for ins in &f.body {
                fb.push(sid(&ins.loc, None).0);
                match &ins.inst {
                    Inst::Cmp { .. } | Inst::Call { .. } => {
                        fs.push(unique(&ins.loc, None));
                        fc.push(Vec::new());
                    }
                    Inst::Switch { cases: cs, .. } => {
                        fs.push(sid(&ins.loc, None));
                        fc.push(cs.iter().map(|(v, _)| unique(&ins.loc, Some(*v))).collect());
                    }
                    _ => {
                        fs.push(sid(&ins.loc, None));
                        fc.push(Vec::new());
                    }
                }
            }
            site.push(fs);
            cases.push(fc);
            block.push(fb);
        }
        SiteIds { site, cases, block }
    }
}

/// AFL bucket index of a hit count: 0, 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+.
#[inline]
pub fn bucket(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        32..=127 => 7,
        _ => 8,
    }
}

/// 65536 saturating hit counters plus the list of touched slots, so clearing
/// and scanning cost proportional to what an execution actually hit.
#[derive(Clone)]
pub struct CoverageBitmap {
    counts: Box<[u8]>,
    touched: Vec<u16>,
}

impl Default for CoverageBitmap {
    fn default() -> Self {
        CoverageBitmap {
            counts: vec![0u8; MAP_SIZE].into_boxed_slice(),
            touched: Vec::new(),
        }
    }
}

impl PartialEq for CoverageBitmap {
    fn eq(&self, other: &Self) -> bool {
        self.counts == other.counts
    }
}

impl Eq for CoverageBitmap {}

impl fmt::Debug for CoverageBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverageBitmap")
            .field("slots_hit", &self.count_nonzero())
            .finish()
    }
}

impl CoverageBitmap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.counts[i as usize] = 0;
        }
        self.touched.clear();
    }

    #[inline]
    pub fn hit(&mut self, slot: usize) {
        let c = &mut self.counts[slot % MAP_SIZE];
        if *c == 0 {
            self.touched.push((slot % MAP_SIZE) as u16);
        }
        *c = c.saturating_add(1);
    }

    /// Count the edge `prev -> cur` at slot `(cur ^ (prev >> 1)) mod 65536`.
    #[inline]
    pub fn record_edge(&mut self, prev: u32, cur: u32) {
        self.hit(((cur ^ (prev >> 1)) as usize) % MAP_SIZE);
    }

    pub fn get(&self, slot: usize) -> u8 {
        self.counts[slot % MAP_SIZE]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.counts
    }

    /// Slots with a nonzero count, in first-hit order.
    pub fn touched(&self) -> &[u16] {
        &self.touched
    }

    pub fn count_nonzero(&self) -> usize {
        self.touched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }

    /// Fold `other` in as a per-slot maximum.
    pub fn merge_max(&mut self, other: &CoverageBitmap) {
        for &i in &other.touched {
            let v = other.counts[i as usize];
            let c = &mut self.counts[i as usize];
            if *c == 0 {
                self.touched.push(i);
            }
            *c = (*c).max(v);
        }
    }

    /// True iff some slot of `run` lands in a higher hit bucket than in `self`.
    pub fn is_interesting(&self, run: &CoverageBitmap) -> bool {
        run.touched
            .iter()
            .any(|&i| bucket(run.counts[i as usize]) > bucket(self.counts[i as usize]))
    }
}

/// True iff some slot's bucketized count in `run` exceeds the one in `global`.
pub fn is_interesting(run: &CoverageBitmap, global: &CoverageBitmap) -> bool {
    global.is_interesting(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent FNV-1a reference: byte-at-a-time over u64 arithmetic.
    fn fnv_reference(s: &str) -> u32 {
        let mut h: u64 = 2166136261;
        for b in s.bytes() {
            h ^= b as u64;
            h = (h * 16777619) % (1u64 << 32);
        }
        h as u32
    }

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a32(b""), 0x811c9dc5);
        assert_eq!(fnv1a32(b"a"), 0xe40c292c);
        assert_eq!(fnv1a32(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn sid_matches_reference() {
        let loc = Location::new("t.ir", 3, 8);
        assert_eq!(sid(&loc, None), Sid(fnv_reference("t.ir:3:8")));
        assert_eq!(sid(&loc, None), sid(&loc.clone(), None));
        assert_ne!(sid(&loc, Some(1)), sid(&loc, Some(2)));
    }

    #[test]
    fn context_algebra() {
        let s = Sid(0x1234_5678);
        assert_eq!(Context::EMPTY.update(s), Context(s.0));
        let c = Context(0xdead_beef);
        assert_eq!(c.update(s).update(s), c);
        let (s1, s2, s3) = (Sid(3), Sid(5), Sid(0x100));
        let nested = Context::EMPTY.update(s1).update(s2).update(s3);
        assert_eq!(nested.0, 3 ^ 5 ^ 0x100);
        assert_eq!(branch_id(Context::EMPTY, s), BranchId(s.0));
        assert_ne!(branch_id(Context(1), s), branch_id(Context(2), s));
    }

    #[test]
    fn edges_and_saturation() {
        let mut m = CoverageBitmap::new();
        m.record_edge(0, 70000);
        assert_eq!(m.get(70000 % MAP_SIZE), 1);
        m.record_edge(0, 70000);
        assert_eq!(m.get(70000 % MAP_SIZE), 2);
        for _ in 0..300 {
            m.record_edge(8, 9);
        }
        assert_eq!(m.get(9 ^ 4), 255);
        m.clear();
        assert!(m.as_bytes().iter().all(|b| *b == 0));
        assert!(m.is_empty());
    }

    #[test]
    fn interesting_buckets() {
        let mut global = CoverageBitmap::new();
        let mut run = CoverageBitmap::new();
        run.hit(10);
        assert!(is_interesting(&run, &global));
        global.merge_max(&run);
        assert!(!is_interesting(&run, &global));
        let mut three = CoverageBitmap::new();
        for _ in 0..3 {
            three.hit(10);
        }
        global.merge_max(&three);
        let mut four = CoverageBitmap::new();
        for _ in 0..4 {
            four.hit(10);
        }
        assert!(is_interesting(&four, &global));
        let mut five = CoverageBitmap::new();
        for _ in 0..5 {
            five.hit(10);
        }
        global.merge_max(&four);
        assert!(!is_interesting(&five, &global));
    }
}
