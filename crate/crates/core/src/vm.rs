//! Interpreter for mini-ir programs.
//!
//! One interpreter serves both execution modes. Plain runs collect edge
//! coverage and, when asked, a log of every comparison. Tainted runs
//! additionally propagate byte labels through the union table and record a
//! sketch for every comparison with a tainted operand. Taint is metadata
//! only: both modes compute identical values, control flow and logs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{truncate, BinOp, CastOp, Relop, UnOp};
use crate::branch::{branch_id, BranchId, Context, CoverageBitmap, Sid, SiteIds};
use crate::ir::{Inst, Location, Operand, Program};
use crate::taint::{
    input_labels, load_labels, store_labels, ShadowMemory, TaintConfig, TaintError, TaintLabel,
    TaintOp, UnionTable, OVERREAD, UNTAINTED,
};

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
pub const DEFAULT_MAX_CALL_DEPTH: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: u64,
    pub max_call_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: DEFAULT_MAX_STEPS,
            max_call_depth: DEFAULT_MAX_CALL_DEPTH,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    Halted,
    Crashed(u32),
    LimitExceeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: BranchId,
    pub lhs: u64,
    pub rhs: u64,
    pub relop: Relop,
    /// Operand size in bytes.
    pub size: u8,
    pub outcome: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub exit: Exit,
    pub coverage: CoverageBitmap,
    pub branch_log: Vec<BranchRecord>,
    /// Smallest input length that would have avoided reading past the end.
    pub overread: Option<u64>,
    pub steps: u64,
}

impl RunResult {
    /// First record of `id` in the log.
    pub fn find(&self, id: BranchId) -> Option<&BranchRecord> {
        self.branch_log.iter().find(|r| r.id == id)
    }
}

/// A comparison with at least one tainted operand. Untainted sides carry
/// label 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchRecord {
    pub record: BranchRecord,
    pub lhs_label: TaintLabel,
    pub rhs_label: TaintLabel,
}

impl SketchRecord {
    /// True when either side depends on bytes past the end of the input.
    pub fn overread(&self) -> bool {
        self.lhs_label == OVERREAD || self.rhs_label == OVERREAD
    }
}

#[derive(Clone, Debug)]
pub struct TaintRunResult {
    pub run: RunResult,
    pub sketches: Vec<SketchRecord>,
    pub union_table: UnionTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VmError {
    #[error(transparent)]
    Taint(#[from] TaintError),
}

#[derive(Clone, Copy, Debug)]
enum Src {
    Reg(u16),
    Imm(u64),
}

impl From<&Operand> for Src {
    fn from(o: &Operand) -> Self {
        match o {
            Operand::Reg(r) => Src::Reg(r.0),
            Operand::Imm(v) => Src::Imm(*v),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const { dst: u16, value: u64 },
    In { dst: u16, offset: Src, size: u32 },
    Mov { dst: u16, src: u16 },
    Load { dst: u16, addr: Src, size: u32 },
    Store { addr: Src, src: Src, size: u32 },
    Unary { op: UnOp, dst: u16, src: Src, bits: u32 },
    Binary { op: BinOp, dst: u16, lhs: Src, rhs: Src, bits: u32 },
    Cast { op: CastOp, dst: u16, src: u16, from: u32, to: u32 },
    Cmp { relop: Relop, dst: u16, lhs: Src, rhs: Src, bits: u32, sid: Sid },
    Br { cond: u16, then_to: u32, else_to: u32 },
    Jmp { to: u32 },
    Switch { value: u16, bits: u32, cases: Box<[(u64, u32, Sid)]>, default: u32 },
    Call { dst: Option<u16>, func: u32, args: Box<[Src]>, sid: Sid },
    Ret { value: Option<Src> },
    Crash { bug: u32 },
    Halt,
}

struct CompiledFn {
    code: Vec<Op>,
    blocks: Vec<u32>,
    num_regs: usize,
}

/// A validated program lowered to index-resolved form, with its site ids.
pub struct LoadedProgram {
    program: Program,
    funcs: Vec<CompiledFn>,
    entry: u32,
    sites: SiteIds,
    locations: HashMap<Sid, Location>,
}

impl LoadedProgram {
    /// Lower a program. The program must have passed validation.
    pub fn new(program: Program) -> LoadedProgram {
        let sites = SiteIds::assign(&program);
        let mut locations = HashMap::new();
        let mut funcs = Vec::with_capacity(program.functions.len());
        for (fi, f) in program.functions.iter().enumerate() {
            let target = |label: &str| f.labels[label] as u32;
            let mut code = Vec::with_capacity(f.body.len());
            for (ii, ins) in f.body.iter().enumerate() {
                let site = sites.site[fi][ii];
                let op = match &ins.inst {
                    Inst::Const { dst, value, width } => Op::Const {
                        dst: dst.0,
                        value: truncate(*value, width.bits()),
                    },
                    Inst::In { dst, offset, size } => Op::In {
                        dst: dst.0,
                        offset: offset.into(),
                        size: size.bytes(),
                    },
                    Inst::Mov { dst, src, .. } => Op::Mov { dst: dst.0, src: src.0 },
                    Inst::Load { dst, addr, size } => Op::Load {
                        dst: dst.0,
                        addr: addr.into(),
                        size: size.bytes(),
                    },
                    Inst::Store { addr, src, size } => Op::Store {
                        addr: addr.into(),
                        src: src.into(),
                        size: size.bytes(),
                    },
                    Inst::Unary { op, dst, src, width } => Op::Unary {
                        op: *op,
                        dst: dst.0,
                        src: src.into(),
                        bits: width.bits(),
                    },
                    Inst::Binary { op, dst, lhs, rhs, width } => Op::Binary {
                        op: *op,
                        dst: dst.0,
                        lhs: lhs.into(),
                        rhs: rhs.into(),
                        bits: width.bits(),
                    },
                    Inst::Cast { op, dst, src, from, to } => Op::Cast {
                        op: *op,
                        dst: dst.0,
                        src: src.0,
                        from: from.bits(),
                        to: to.bits(),
                    },
                    Inst::Cmp { relop, dst, lhs, rhs, width } => {
                        locations.insert(site, ins.loc.clone());
                        Op::Cmp {
                            relop: *relop,
                            dst: dst.0,
                            lhs: lhs.into(),
                            rhs: rhs.into(),
                            bits: width.bits(),
                            sid: site,
                        }
                    }
                    Inst::Br { cond, then_label, else_label } => Op::Br {
                        cond: cond.0,
                        then_to: target(then_label),
                        else_to: target(else_label),
                    },
                    Inst::Jmp { target: t } => Op::Jmp { to: target(t) },
                    Inst::Switch { value, cases, default } => {
                        let bits = value_width(f, value.0).unwrap_or(64);
                        let cs = cases
                            .iter()
                            .zip(&sites.cases[fi][ii])
                            .map(|((v, l), s)| {
                                locations.insert(*s, ins.loc.clone());
                                (*v, target(l), *s)
                            })
                            .collect();
                        Op::Switch {
                            value: value.0,
                            bits,
                            cases: cs,
                            default: target(default),
                        }
                    }
                    Inst::Call { dst, func, args } => {
                        locations.insert(site, ins.loc.clone());
                        Op::Call {
                            dst: dst.map(|d| d.0),
                            func: program.function_index(func).expect("validated call") as u32,
                            args: args.iter().map(Src::from).collect(),
                            sid: site,
                        }
                    }
                    Inst::Ret { value } => Op::Ret {
                        value: value.as_ref().map(Src::from),
                    },
                    Inst::Crash { bug } => Op::Crash { bug: *bug },
                    Inst::Halt => Op::Halt,
                };
                code.push(op);
            }
            funcs.push(CompiledFn {
                code,
                blocks: sites.block[fi].clone(),
                num_regs: f.num_regs(),
            });
        }
        let entry = program.function_index(&program.entry).expect("validated entry") as u32;
        LoadedProgram {
            program,
            funcs,
            entry,
            sites,
            locations,
        }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn sites(&self) -> &SiteIds {
        &self.sites
    }

    /// Source location of a comparison, switch case or call site.
    pub fn site_location(&self, sid: Sid) -> Option<&Location> {
        self.locations.get(&sid)
    }

    /// Every comparison and switch-case site id.
    pub fn branch_sites(&self) -> impl Iterator<Item = Sid> + '_ {
        self.funcs.iter().flat_map(|f| {
            f.code.iter().flat_map(|op| match op {
                Op::Cmp { sid, .. } => vec![*sid],
                Op::Switch { cases, .. } => cases.iter().map(|c| c.2).collect(),
                _ => Vec::new(),
            })
        })
    }
}

fn value_width(f: &crate::ir::FunctionDef, reg: u16) -> Option<u32> {
    if let Some(w) = f.params.get(reg as usize) {
        return Some(w.bits());
    }
    f.body.iter().find_map(|ins| match &ins.inst {
        Inst::Const { dst, width, .. }
        | Inst::Mov { dst, width, .. }
        | Inst::Unary { dst, width, .. }
        | Inst::Binary { dst, width, .. }
            if dst.0 == reg =>
        {
            Some(width.bits())
        }
        Inst::In { dst, size, .. } | Inst::Load { dst, size, .. } if dst.0 == reg => Some(size.bits()),
        Inst::Cast { dst, to, .. } if dst.0 == reg => Some(to.bits()),
        Inst::Cmp { dst, .. } if dst.0 == reg => Some(8),
        _ => None,
    })
}

struct Frame {
    func: u32,
    pc: u32,
    base: usize,
    ret_dst: Option<u16>,
    callsite: Sid,
}

struct TaintState {
    table: UnionTable,
    shadow: ShadowMemory,
    labels: Vec<TaintLabel>,
    sketches: Vec<SketchRecord>,
}

/// Reusable execution state for one program. Buffers are kept between runs
/// so the fuzzing loop does not reallocate per execution.
pub struct Vm<'p> {
    prog: &'p LoadedProgram,
    limits: Limits,
    memory: Vec<u8>,
    regs: Vec<u64>,
    frames: Vec<Frame>,
    coverage: CoverageBitmap,
    log: Vec<BranchRecord>,
    runs: u64,
}

/// Outcome of [`Vm::execute`]; coverage stays in the VM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub exit: Exit,
    pub overread: Option<u64>,
    pub steps: u64,
}

impl<'p> Vm<'p> {
    pub fn new(prog: &'p LoadedProgram, limits: Limits) -> Self {
        Vm {
            prog,
            limits,
            memory: vec![0; prog.program.memory_size],
            regs: Vec::new(),
            frames: Vec::new(),
            coverage: CoverageBitmap::new(),
            log: Vec::new(),
            runs: 0,
        }
    }

    /// Number of runs (plain or tainted) started on this VM.
    pub fn runs(&self) -> u64 {
        self.runs
    }

    pub fn program(&self) -> &'p LoadedProgram {
        self.prog
    }

    pub fn coverage(&self) -> &CoverageBitmap {
        &self.coverage
    }

    /// Comparison log of the last run (empty unless logging was requested).
    pub fn branch_log(&self) -> &[BranchRecord] {
        &self.log
    }

    /// Plain run. Coverage and, with `log_branches`, the comparison log are
    /// left in the VM.
    pub fn execute(&mut self, input: &[u8], log_branches: bool) -> RunSummary {
        match self.exec(input, log_branches, None) {
            Ok(s) => s,
            Err(_) => unreachable!("plain runs allocate no labels"),
        }
    }

    pub fn run_plain(&mut self, input: &[u8], log_branches: bool) -> RunResult {
        let s = self.execute(input, log_branches);
        self.result(s)
    }

    pub fn run_tainted(&mut self, input: &[u8], config: TaintConfig) -> Result<TaintRunResult, VmError> {
        let mut state = TaintState {
            table: UnionTable::new(input.len(), config),
            shadow: ShadowMemory::new(self.prog.program.memory_size),
            labels: Vec::new(),
            sketches: Vec::new(),
        };
        let s = self.exec(input, true, Some(&mut state))?;
        Ok(TaintRunResult {
            run: self.result(s),
            sketches: state.sketches,
            union_table: state.table,
        })
    }

    fn result(&self, s: RunSummary) -> RunResult {
        RunResult {
            exit: s.exit,
            coverage: self.coverage.clone(),
            branch_log: self.log.clone(),
            overread: s.overread,
            steps: s.steps,
        }
    }

    fn exec(
        &mut self,
        input: &[u8],
        log_branches: bool,
        mut taint: Option<&mut TaintState>,
    ) -> Result<RunSummary, VmError> {
        let prog = self.prog;
        let mem_size = self.memory.len();
        self.memory.fill(0);
        self.regs.clear();
        self.frames.clear();
        self.coverage.clear();
        self.log.clear();
        self.runs += 1;

        let mut overread: Option<u64> = None;
        let mut ctx = Context::EMPTY;
        let mut func = prog.entry as usize;
        let mut pc: usize = 0;
        let mut base: usize = 0;
        let mut steps: u64 = 0;
        self.regs.resize(prog.funcs[func].num_regs, 0);
        if let Some(t) = taint.as_deref_mut() {
            t.labels.resize(self.regs.len(), UNTAINTED);
        }
        let mut prev_block: u32 = 0;
        let mut cur_block = prog.funcs[func].blocks[0];
        self.coverage.record_edge(prev_block, cur_block);
        prev_block = cur_block;

        macro_rules! val {
            ($s:expr) => {
                match $s {
                    Src::Reg(r) => self.regs[base + r as usize],
                    Src::Imm(v) => v,
                }
            };
        }
        macro_rules! jump {
            ($to:expr) => {{
                pc = $to as usize;
                cur_block = prog.funcs[func].blocks[pc];
                self.coverage.record_edge(prev_block, cur_block);
                prev_block = cur_block;
                continue;
            }};
        }

        let exit = loop {
            if steps >= self.limits.max_steps {
                break Exit::LimitExceeded;
            }
            steps += 1;
            let op = &prog.funcs[func].code[pc];
            match *op {
                Op::Const { dst, value } => {
                    self.regs[base + dst as usize] = value;
                    if let Some(t) = taint.as_deref_mut() {
                        t.labels[base + dst as usize] = t.table.concrete_label(value);
                    }
                }
                Op::In { dst, offset, size } => {
                    let off = val!(offset);
                    let end = off.saturating_add(size as u64);
                    if end > input.len() as u64 {
                        overread = Some(overread.map_or(end, |o| o.max(end)));
                    }
                    let mut v = 0u64;
                    for i in 0..size as u64 {
                        let b = off
                            .checked_add(i)
                            .and_then(|p| input.get(usize::try_from(p).ok()?))
                            .copied()
                            .unwrap_or(0);
                        v |= (b as u64) << (8 * i);
                    }
                    self.regs[base + dst as usize] = v;
                    if let Some(t) = taint.as_deref_mut() {
                        t.labels[base + dst as usize] = input_labels(&mut t.table, off, size)?;
                    }
                }
                Op::Mov { dst, src } => {
                    self.regs[base + dst as usize] = self.regs[base + src as usize];
                    if let Some(t) = taint.as_deref_mut() {
                        t.labels[base + dst as usize] = t.labels[base + src as usize];
                    }
                }
                Op::Load { dst, addr, size } => {
                    let a = (val!(addr) % mem_size as u64) as usize;
                    let mut v = 0u64;
                    for i in 0..size as usize {
                        v |= (self.memory[(a + i) % mem_size] as u64) << (8 * i);
                    }
                    self.regs[base + dst as usize] = v;
                    if let Some(t) = taint.as_deref_mut() {
                        t.labels[base + dst as usize] = load_labels(&mut t.table, &t.shadow, a, size)?;
                    }
                }
                Op::Store { addr, src, size } => {
                    let a = (val!(addr) % mem_size as u64) as usize;
                    let v = val!(src);
                    for i in 0..size as usize {
                        self.memory[(a + i) % mem_size] = (v >> (8 * i)) as u8;
                    }
                    if let Some(t) = taint.as_deref_mut() {
                        let l = src_label(t, base, src);
                        store_labels(&mut t.table, &mut t.shadow, a, size, l)?;
                    }
                }
                Op::Unary { op, dst, src, bits } => {
                    self.regs[base + dst as usize] = op.eval(val!(src), bits);
                    if let Some(t) = taint.as_deref_mut() {
                        let l = src_label(t, base, src);
                        t.labels[base + dst as usize] =
                            t.table.union(TaintOp::from(op), l, 0, (bits / 8) as u8)?;
                    }
                }
                Op::Binary { op, dst, lhs, rhs, bits } => {
                    self.regs[base + dst as usize] = op.eval(val!(lhs), val!(rhs), bits);
                    if let Some(t) = taint.as_deref_mut() {
                        let l1 = src_label(t, base, lhs);
                        let l2 = src_label(t, base, rhs);
                        t.labels[base + dst as usize] =
                            t.table.union(TaintOp::from(op), l1, l2.0, (bits / 8) as u8)?;
                    }
                }
                Op::Cast { op, dst, src, from, to } => {
                    self.regs[base + dst as usize] = op.eval(self.regs[base + src as usize], from, to);
                    if let Some(t) = taint.as_deref_mut() {
                        let l = t.labels[base + src as usize];
                        t.labels[base + dst as usize] =
                            t.table.union(TaintOp::from(op), l, to / 8, (from / 8) as u8)?;
                    }
                }
                Op::Cmp { relop, dst, lhs, rhs, bits, sid } => {
                    let (a, b) = (val!(lhs), val!(rhs));
                    let outcome = relop.eval(a, b, bits);
                    self.regs[base + dst as usize] = outcome as u64;
                    let record = BranchRecord {
                        id: branch_id(ctx, sid),
                        lhs: a,
                        rhs: b,
                        relop,
                        size: (bits / 8) as u8,
                        outcome,
                    };
                    if log_branches {
                        self.log.push(record);
                    }
                    if let Some(t) = taint.as_deref_mut() {
                        let l1 = src_label(t, base, lhs);
                        let l2 = src_label(t, base, rhs);
                        t.labels[base + dst as usize] = UNTAINTED;
                        log_sketch(t, record, l1, l2);
                    }
                }
                Op::Br { cond, then_to, else_to } => {
                    if self.regs[base + cond as usize] != 0 {
                        jump!(then_to)
                    } else {
                        jump!(else_to)
                    }
                }
                Op::Jmp { to } => jump!(to),
                Op::Switch { value, bits, ref cases, default } => {
                    let v = self.regs[base + value as usize];
                    let label = taint.as_deref().map(|t| t.labels[base + value as usize]);
                    let mut to = default;
                    let mut taken = false;
                    for &(case, target, sid) in cases.iter() {
                        let outcome = v == case;
                        if outcome && !taken {
                            to = target;
                            taken = true;
                        }
                        let record = BranchRecord {
                            id: branch_id(ctx, sid),
                            lhs: v,
                            rhs: case,
                            relop: Relop::Eq,
                            size: (bits / 8) as u8,
                            outcome,
                        };
                        if log_branches {
                            self.log.push(record);
                        }
                        if let (Some(t), Some(l)) = (taint.as_deref_mut(), label) {
                            log_sketch(t, record, l, UNTAINTED);
                        }
                    }
                    jump!(to)
                }
                Op::Call { dst, func: callee, ref args, sid } => {
                    if self.frames.len() >= self.limits.max_call_depth {
                        break Exit::LimitExceeded;
                    }
                    let new_base = self.regs.len();
                    let n = prog.funcs[callee as usize].num_regs;
                    self.regs.resize(new_base + n, 0);
                    for (i, a) in args.iter().enumerate() {
                        self.regs[new_base + i] = val!(*a);
                    }
                    if let Some(t) = taint.as_deref_mut() {
                        t.labels.resize(new_base + n, UNTAINTED);
                        for (i, a) in args.iter().enumerate() {
                            t.labels[new_base + i] = src_label(t, base, *a);
                        }
                    }
                    self.frames.push(Frame {
                        func: func as u32,
                        pc: pc as u32,
                        base,
                        ret_dst: dst,
                        callsite: sid,
                    });
                    ctx = ctx.update(sid);
                    func = callee as usize;
                    base = new_base;
                    jump!(0)
                }
                Op::Ret { value } => {
                    let Some(frame) = self.frames.pop() else {
                        break Exit::Halted;
                    };
                    let v = value.map(|s| val!(s));
                    let l = match (value, taint.as_deref()) {
                        (Some(s), Some(t)) => src_label(t, base, s),
                        _ => UNTAINTED,
                    };
                    self.regs.truncate(base);
                    ctx = ctx.update(frame.callsite);
                    func = frame.func as usize;
                    base = frame.base;
                    if let Some(t) = taint.as_deref_mut() {
                        t.labels.truncate(self.regs.len());
                        if let Some(d) = frame.ret_dst {
                            t.labels[base + d as usize] = l;
                        }
                    }
                    if let (Some(d), Some(v)) = (frame.ret_dst, v) {
                        self.regs[base + d as usize] = v;
                    }
                    jump!(frame.pc + 1)
                }
                Op::Crash { bug } => break Exit::Crashed(bug),
                Op::Halt => break Exit::Halted,
            }
            pc += 1;
        };
        Ok(RunSummary { exit, overread, steps })
    }
}

fn src_label(t: &TaintState, base: usize, s: Src) -> TaintLabel {
    match s {
        Src::Reg(r) => t.labels[base + r as usize],
        Src::Imm(v) => t.table.concrete_label(v),
    }
}

fn log_sketch(t: &mut TaintState, record: BranchRecord, lhs: TaintLabel, rhs: TaintLabel) {
    let side = |l: TaintLabel| if l.is_tainted() { l } else { UNTAINTED };
    let (lhs, rhs) = (side(lhs), side(rhs));
    // A value compared with itself has a constant outcome.
    if lhs == rhs && lhs != OVERREAD {
        return;
    }
    if lhs != UNTAINTED || rhs != UNTAINTED {
        t.sketches.push(SketchRecord {
            record,
            lhs_label: lhs,
            rhs_label: rhs,
        });
    }
}

/// Plain run with comparison logging.
pub fn run_plain(program: &LoadedProgram, input: &[u8], limits: Limits) -> RunResult {
    Vm::new(program, limits).run_plain(input, true)
}

/// Tainted run with all label optimizations enabled.
pub fn run_tainted(program: &LoadedProgram, input: &[u8], limits: Limits) -> Result<TaintRunResult, VmError> {
    Vm::new(program, limits).run_tainted(input, TaintConfig::default())
}

pub const BRANCH_RECORD_LEN: usize = 27;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("log truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid relop code {code} at byte {at}")]
    BadRelop { code: u8, at: usize },
    #[error("invalid union op code {code} at byte {at}")]
    BadOp { code: u8, at: usize },
}

/// `[u64 id][u64 lhs][u64 rhs][u8 relop][u8 size][u8 outcome]`, little-endian.
pub fn encode_record(r: &BranchRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&(r.id.0 as u64).to_le_bytes());
    out.extend_from_slice(&r.lhs.to_le_bytes());
    out.extend_from_slice(&r.rhs.to_le_bytes());
    out.push(r.relop.code());
    out.push(r.size);
    out.push(r.outcome as u8);
}

fn decode_record(bytes: &[u8], at: usize) -> Result<BranchRecord, LogError> {
    let b = bytes
        .get(at..at + BRANCH_RECORD_LEN)
        .ok_or(LogError::Truncated(bytes.len()))?;
    let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
    let relop = Relop::from_code(b[24]).ok_or(LogError::BadRelop {
        code: b[24],
        at: at + 24,
    })?;
    Ok(BranchRecord {
        id: BranchId(u64_at(0) as u32),
        lhs: u64_at(8),
        rhs: u64_at(16),
        relop,
        size: b[25],
        outcome: b[26] != 0,
    })
}

pub fn encode_branch_log(log: &[BranchRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(log.len() * BRANCH_RECORD_LEN);
    for r in log {
        encode_record(r, &mut out);
    }
    out
}

pub fn decode_branch_log(bytes: &[u8]) -> Result<Vec<BranchRecord>, LogError> {
    if !bytes.len().is_multiple_of(BRANCH_RECORD_LEN) {
        return Err(LogError::Truncated(bytes.len()));
    }
    (0..bytes.len())
        .step_by(BRANCH_RECORD_LEN)
        .map(|at| decode_record(bytes, at))
        .collect()
}

/// A decoded sketch-log entry: the comparison, its operand labels and the
/// union entries reachable from them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchLogEntry {
    pub record: BranchRecord,
    pub lhs_label: TaintLabel,
    pub rhs_label: TaintLabel,
    pub slice: std::collections::BTreeMap<TaintLabel, crate::taint::UnionEntry>,
}

/// Per sketch: branch record, `[u32 lhs_label][u32 rhs_label]`, `[u32 n]`,
/// then `n` union-table records reachable from either label.
pub fn encode_sketch_log(result: &TaintRunResult) -> Vec<u8> {
    let mut out = Vec::new();
    for s in &result.sketches {
        encode_record(&s.record, &mut out);
        out.extend_from_slice(&s.lhs_label.0.to_le_bytes());
        out.extend_from_slice(&s.rhs_label.0.to_le_bytes());
        let slice = result.union_table.serialize_slice(&[s.lhs_label, s.rhs_label]);
        let n = (slice.len() / crate::taint::SLICE_RECORD_LEN) as u32;
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&slice);
    }
    out
}

pub fn decode_sketch_log(bytes: &[u8]) -> Result<Vec<SketchLogEntry>, LogError> {
    use crate::taint::{parse_slice, SLICE_RECORD_LEN};
    let mut out = Vec::new();
    let mut at = 0;
    let u32_at = |i: usize| -> Result<u32, LogError> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or(LogError::Truncated(bytes.len()))
    };
    while at < bytes.len() {
        let record = decode_record(bytes, at)?;
        at += BRANCH_RECORD_LEN;
        let lhs_label = TaintLabel(u32_at(at)?);
        let rhs_label = TaintLabel(u32_at(at + 4)?);
        let n = u32_at(at + 8)? as usize;
        at += 12;
        let len = n * SLICE_RECORD_LEN;
        let raw = bytes.get(at..at + len).ok_or(LogError::Truncated(bytes.len()))?;
        let slice = parse_slice(raw).ok_or(LogError::BadOp { code: 0, at })?;
        at += len;
        out.push(SketchLogEntry {
            record,
            lhs_label,
            rhs_label,
            slice: slice.into_iter().collect(),
        });
    }
    Ok(out)
}

/// IO-pair record `[u64 id][u64 lhs][u64 rhs][u8 outcome]`.
pub fn encode_io_record(r: &BranchRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&(r.id.0 as u64).to_le_bytes());
    out.extend_from_slice(&r.lhs.to_le_bytes());
    out.extend_from_slice(&r.rhs.to_le_bytes());
    out.push(r.outcome as u8);
}

#[cfg(test)]
mod tests;
