//! Predicate synthesis: rebuild the partial expression behind each side of
//! a tainted comparison, collect input/output observations by mutating the
//! bytes it reads, and solve for the concrete constants it lost.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{truncate, BinOp, CastOp, Relop};
use crate::branch::BranchId;
use crate::solver::{BvFormula, BvTerm, CheckResult, Solver};
use crate::taint::{reachable_from, LabelGraph, TaintLabel, TaintOp, UnionEntry, OVERREAD};
use crate::vm::Vm;

/// Sketches larger than this are not handed to the solver.
pub const MAX_SKETCH_LINES: usize = 2048;
/// Conflicts allowed per constant-solving check.
pub const SYNTH_CONFLICT_BUDGET: u64 = 4_000;

/// Conflicts one constant solve may spend over all pairs; pairs left once it
/// runs out are dropped unchecked.
pub const SYNTH_TOTAL_BUDGET: u64 = 12_000;
pub const DEFAULT_INITIAL_PAIRS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lhs,
    Rhs,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("operand depends on bytes past the end of the input")]
    Overread,
    #[error("sketch references unknown label {0}")]
    UnknownLabel(TaintLabel),
    #[error("sketch has {0} lines, more than the supported maximum")]
    TooLarge(usize),
    #[error("only {0} usable input/output pairs")]
    InsufficientObservations(usize),
    #[error("the base observation contradicts the sketch")]
    SketchInconsistent,
    #[error("solver gave up")]
    SolverUnknown,
}

/// The union entries behind one comparison operand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sketch {
    pub root: TaintLabel,
    pub lines: Vec<(TaintLabel, UnionEntry)>,
    pub args: Vec<usize>,
    pub relop: Relop,
    pub size: u8,
    pub side: Side,
}

pub fn extract_sketch<G: LabelGraph + ?Sized>(
    graph: &G,
    root: TaintLabel,
    relop: Relop,
    size: u8,
    side: Side,
) -> Result<Sketch, SynthError> {
    if root == OVERREAD {
        return Err(SynthError::Overread);
    }
    let labels = reachable_from(graph, &[root]);
    if labels.len() > MAX_SKETCH_LINES {
        return Err(SynthError::TooLarge(labels.len()));
    }
    let mut args = BTreeSet::new();
    let note = |l: TaintLabel, args: &mut BTreeSet<usize>| -> Result<(), SynthError> {
        if l == OVERREAD {
            return Err(SynthError::Overread);
        }
        if let Some(off) = graph.input_offset_of(l) {
            args.insert(off);
        }
        Ok(())
    };
    note(root, &mut args)?;
    let mut lines = Vec::with_capacity(labels.len());
    for l in labels {
        let e = graph.lookup(l).expect("reachable label has an entry");
        if e.op == TaintOp::Uload {
            let first = graph
                .input_offset_of(e.operand1)
                .ok_or(SynthError::UnknownLabel(e.operand1))?;
            args.extend(first..first + e.operand2 as usize);
        } else {
            for c in e.children() {
                note(c, &mut args)?;
            }
        }
        lines.push((l, e));
    }
    if lines.is_empty() && graph.input_offset_of(root).is_none() {
        return Err(SynthError::UnknownLabel(root));
    }
    Ok(Sketch {
        root,
        lines,
        args: args.into_iter().collect(),
        relop,
        size,
        side,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymOperand {
    /// Input byte at this offset.
    Arg(usize),
    /// Output of an earlier line.
    Line(usize),
    /// Index into the unknown constants.
    Unknown(usize),
    Const(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymLine {
    pub op: TaintOp,
    pub a: SymOperand,
    pub b: Option<SymOperand>,
    /// Byte count for `uload`, bit offset for `extract`.
    pub imm: u32,
    /// Width of the operands in bits.
    pub in_width: u32,
    /// Width of the result in bits.
    pub width: u32,
}

impl fmt::Display for SymOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymOperand::Arg(o) => write!(f, "x{o}"),
            SymOperand::Line(i) => write!(f, "t{i}"),
            SymOperand::Unknown(i) => write!(f, "k{i}"),
            SymOperand::Const(c) => write!(f, "{c:#x}"),
        }
    }
}

/// An executable expression over input bytes with unknown constant slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymFn {
    pub args: Vec<usize>,
    pub lines: Vec<SymLine>,
    /// Bit width of each unknown constant.
    pub unknowns: Vec<u32>,
    pub ret: SymOperand,
    pub width: u32,
}

pub fn build_symfn(sketch: &Sketch) -> Result<SymFn, SynthError> {
    let base = |l: TaintLabel| -> Option<usize> {
        (l.0 >= crate::taint::FIRST_INPUT_LABEL && l != OVERREAD).then(|| (l.0 - crate::taint::FIRST_INPUT_LABEL) as usize)
    };
    let index: BTreeMap<TaintLabel, usize> = sketch
        .lines
        .iter()
        .enumerate()
        .map(|(i, (l, _))| (*l, i))
        .collect();
    let mut unknowns = Vec::new();
    let mut widths: Vec<u32> = Vec::with_capacity(sketch.lines.len());
    let operand = |l: TaintLabel, width: u32, unknowns: &mut Vec<u32>| -> Result<SymOperand, SynthError> {
        if l.is_untainted() {
            unknowns.push(width);
            return Ok(SymOperand::Unknown(unknowns.len() - 1));
        }
        if let Some(c) = l.reserved_constant() {
            return Ok(SymOperand::Const(truncate(c, width)));
        }
        if let Some(i) = index.get(&l) {
            return Ok(SymOperand::Line(*i));
        }
        base(l).map(SymOperand::Arg).ok_or(SynthError::UnknownLabel(l))
    };
    let mut lines = Vec::with_capacity(sketch.lines.len());
    for (_, e) in &sketch.lines {
        let bytes = e.size as u32 * 8;
        let line = match e.op {
            op if op.as_binop().is_some() => SymLine {
                op,
                a: operand(e.operand1, bytes, &mut unknowns)?,
                b: Some(operand(TaintLabel(e.operand2), bytes, &mut unknowns)?),
                imm: 0,
                in_width: bytes,
                width: bytes,
            },
            TaintOp::Not | TaintOp::Neg => SymLine {
                op: e.op,
                a: operand(e.operand1, bytes, &mut unknowns)?,
                b: None,
                imm: 0,
                in_width: bytes,
                width: bytes,
            },
            TaintOp::Trunc | TaintOp::Zext | TaintOp::Sext => SymLine {
                op: e.op,
                a: operand(e.operand1, bytes, &mut unknowns)?,
                b: None,
                imm: 0,
                in_width: bytes,
                width: e.operand2 * 8,
            },
            TaintOp::Uload => SymLine {
                op: e.op,
                a: SymOperand::Arg(base(e.operand1).ok_or(SynthError::UnknownLabel(e.operand1))?),
                b: None,
                imm: e.operand2,
                in_width: 8,
                width: e.operand2 * 8,
            },
            TaintOp::Extract => {
                let src = operand(e.operand1, 64, &mut unknowns)?;
                let in_width = match src {
                    SymOperand::Line(i) => widths[i],
                    SymOperand::Arg(_) => 8,
                    _ => e.operand2 + bytes,
                };
                SymLine {
                    op: e.op,
                    a: src,
                    b: None,
                    imm: e.operand2,
                    in_width,
                    width: bytes,
                }
            }
            TaintOp::Concat => SymLine {
                op: e.op,
                a: operand(e.operand1, 8, &mut unknowns)?,
                b: Some(operand(TaintLabel(e.operand2), bytes - 8, &mut unknowns)?),
                imm: 0,
                in_width: 8,
                width: bytes,
            },
            _ => unreachable!("every union op handled"),
        };
        widths.push(line.width);
        lines.push(line);
    }
    let ret = if lines.is_empty() {
        SymOperand::Arg(base(sketch.root).ok_or(SynthError::UnknownLabel(sketch.root))?)
    } else {
        SymOperand::Line(index[&sketch.root])
    };
    let width = match ret {
        SymOperand::Line(i) => widths[i],
        _ => 8,
    };
    Ok(SymFn {
        args: sketch.args.clone(),
        lines,
        unknowns,
        ret,
        width,
    })
}

/// One line per operation, e.g. `t1 = and.32 t0, k0`.
impl fmt::Display for SymFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.lines.iter().enumerate() {
            write!(f, "t{i} = {}.{} {}", l.op.name(), l.width, l.a)?;
            if let Some(b) = l.b {
                write!(f, ", {b}")?;
            }
            if matches!(l.op, TaintOp::Uload | TaintOp::Extract) {
                write!(f, ", {}", l.imm)?;
            }
            writeln!(f)?;
        }
        write!(f, "ret {}", self.ret)
    }
}

impl SymFn {
    /// Build the expression with input bytes and unknowns supplied by the
    /// caller, resized to `out_width` bits.
    pub fn to_term(
        &self,
        arg: &mut dyn FnMut(usize) -> BvTerm,
        unknown: &mut dyn FnMut(usize, u32) -> BvTerm,
        out_width: u32,
    ) -> BvTerm {
        let mut vals: Vec<BvTerm> = Vec::with_capacity(self.lines.len());
        let mut get = |o: SymOperand, w: u32, vals: &[BvTerm], arg: &mut dyn FnMut(usize) -> BvTerm| {
            let t = match o {
                SymOperand::Arg(off) => arg(off),
                SymOperand::Line(i) => vals[i].clone(),
                SymOperand::Unknown(i) => unknown(i, self.unknowns[i]),
                SymOperand::Const(c) => BvTerm::lit(c, w),
            };
            BvTerm::resize(t, w)
        };
        for line in &self.lines {
            let t = match line.op {
                TaintOp::Uload => {
                    let SymOperand::Arg(first) = line.a else {
                        unreachable!("uload reads input bytes")
                    };
                    let mut acc = arg(first);
                    for k in 1..line.imm as usize {
                        acc = BvTerm::concat(arg(first + k), acc);
                    }
                    acc
                }
                TaintOp::Extract => {
                    let src = get(line.a, line.in_width, &vals, arg);
                    let src = if line.imm + line.width > src.width() {
                        BvTerm::resize(src, line.imm + line.width)
                    } else {
                        src
                    };
                    BvTerm::extract(src, line.imm, line.width)
                }
                TaintOp::Concat => {
                    let hi = get(line.a, 8, &vals, arg);
                    let lo = get(line.b.unwrap(), line.width - 8, &vals, arg);
                    BvTerm::concat(hi, lo)
                }
                TaintOp::Trunc | TaintOp::Zext | TaintOp::Sext => {
                    let a = get(line.a, line.in_width, &vals, arg);
                    let op = line.op.as_cast().unwrap();
                    match (op, line.width.cmp(&line.in_width)) {
                        (_, std::cmp::Ordering::Equal) => a,
                        (CastOp::Trunc, std::cmp::Ordering::Less) => BvTerm::cast(op, a, line.width),
                        (CastOp::Zext | CastOp::Sext, std::cmp::Ordering::Greater) => {
                            BvTerm::cast(op, a, line.width)
                        }
                        _ => BvTerm::resize(a, line.width),
                    }
                }
                TaintOp::Not | TaintOp::Neg => {
                    let a = get(line.a, line.in_width, &vals, arg);
                    BvTerm::unary(line.op.as_unop().unwrap(), a)
                }
                op => {
                    let binop: BinOp = op.as_binop().unwrap();
                    let a = get(line.a, line.in_width, &vals, arg);
                    let b = get(line.b.unwrap(), line.in_width, &vals, arg);
                    BvTerm::binary(binop, a, b)
                }
            };
            vals.push(t);
        }
        get(self.ret, out_width, &vals, arg)
    }

    /// Concrete evaluation on input bytes (looked up by offset) and unknown values.
    pub fn eval(&self, byte: &dyn Fn(usize) -> u8, unknowns: &[u64], out_width: u32) -> u64 {
        let t = self.to_term(
            &mut |off| BvTerm::lit(byte(off) as u64, 8),
            &mut |i, w| BvTerm::lit(unknowns[i], w),
            out_width,
        );
        t.as_lit().expect("all leaves are literals")
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }
}

/// One observation of the target comparison: the bytes at the synthesis
/// arguments and the operand values the program computed from them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IoPair {
    pub arg_bytes: Vec<u8>,
    pub lhs: u64,
    pub rhs: u64,
    pub outcome: bool,
}

impl IoPair {
    pub fn byte(&self, args: &[usize], offset: usize) -> u8 {
        args.binary_search(&offset)
            .map(|i| self.arg_bytes[i])
            .unwrap_or(0)
    }
}

pub fn arg_bytes(input: &[u8], args: &[usize]) -> Vec<u8> {
    args.iter().map(|o| input.get(*o).copied().unwrap_or(0)).collect()
}

fn mix(seed: u64, id: BranchId, attempt: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [id.0 as u64, attempt] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
    }
    h
}

/// Mutate only the bytes at `args`.
pub fn mutate_args(input: &mut [u8], args: &[usize], rng: &mut ChaCha8Rng) {
    if args.is_empty() {
        return;
    }
    let pick = |rng: &mut ChaCha8Rng| args[rng.gen_range(0..args.len())];
    match rng.gen_range(0..4) {
        0 => {
            let o = pick(rng);
            input[o] = rng.gen();
        }
        1 => {
            let o = pick(rng);
            input[o] ^= 1 << rng.gen_range(0..8);
        }
        2 => {
            let o = pick(rng);
            let d = [1u8, 4, 16][rng.gen_range(0..3)];
            input[o] = if rng.gen() {
                input[o].wrapping_add(d)
            } else {
                input[o].wrapping_sub(d)
            };
        }
        _ => {
            for &o in args {
                input[o] = rng.gen();
            }
        }
    }
}

/// Run mutated copies of `base` until `n` distinct observations of `target`
/// are collected or the attempt budget runs out. The unmutated base
/// observation always comes first.
pub fn collect_io_pairs(
    vm: &mut Vm<'_>,
    base: &[u8],
    target: BranchId,
    args: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<IoPair>, SynthError> {
    let n = n.max(1);
    let mut input = base.to_vec();
    if let Some(&max) = args.last() {
        if max >= input.len() {
            input.resize(max + 1, 0);
        }
    }
    let observe = |vm: &mut Vm<'_>, input: &[u8]| -> Option<IoPair> {
        vm.execute(input, true);
        vm.branch_log().iter().find(|r| r.id == target).map(|r| IoPair {
            arg_bytes: arg_bytes(input, args),
            lhs: r.lhs,
            rhs: r.rhs,
            outcome: r.outcome,
        })
    };
    let Some(first) = observe(vm, &input) else {
        return Err(SynthError::InsufficientObservations(0));
    };
    let mut seen: HashSet<Vec<u8>> = HashSet::from([first.arg_bytes.clone()]);
    let mut pairs = vec![first];
    let domain = 1usize.checked_shl(8 * args.len() as u32).unwrap_or(usize::MAX);
    let budget = 4 * n as u64 + 8;
    for attempt in 0..budget {
        if pairs.len() >= n || seen.len() >= domain {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, target, attempt));
        let mut candidate = input.clone();
        mutate_args(&mut candidate, args, &mut rng);
        if !seen.insert(arg_bytes(&candidate, args)) {
            continue;
        }
        if let Some(p) = observe(vm, &candidate) {
            pairs.push(p);
        }
    }
    if pairs.len() < 2 {
        return Err(SynthError::InsufficientObservations(pairs.len()));
    }
    Ok(pairs)
}

/// Values for the unknown constants of each side.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub lhs: Vec<u64>,
    pub rhs: Vec<u64>,
    /// Indices of the pairs whose constraints were kept.
    pub admitted: Vec<usize>,
    pub dropped: Vec<usize>,
    /// SAT conflicts spent finding the constants.
    #[serde(default)]
    pub conflicts: u64,
}

fn unknown_name(side: Side, i: usize) -> String {
    match side {
        Side::Lhs => format!("l.c{i}"),
        Side::Rhs => format!("r.c{i}"),
    }
}

/// The observation constraints for one pair.
fn pair_constraint(f: &SymFn, side: Side, args: &[usize], pair: &IoPair, width: u32) -> BvFormula {
    let t = f.to_term(
        &mut |off| BvTerm::lit(pair.byte(args, off) as u64, 8),
        &mut |i, w| BvTerm::var(unknown_name(side, i), w),
        width,
    );
    let observed = match side {
        Side::Lhs => pair.lhs,
        Side::Rhs => pair.rhs,
    };
    BvFormula::eq(t, BvTerm::lit(observed, width))
}

/// Solve the unknown constants of `fl` / `fr` against `pairs`, whose
/// `arg_bytes` are aligned with `args`. With `optimistic`, pairs are
/// admitted one at a time and a pair that makes the system unsatisfiable
/// is dropped.
pub fn solve_constants(
    fl: Option<&SymFn>,
    fr: Option<&SymFn>,
    args: &[usize],
    pairs: &[IoPair],
    width: u32,
    optimistic: bool,
) -> Result<Assignment, SynthError> {
    assert!(fl.is_some() || fr.is_some(), "at least one side must be symbolic");
    if pairs.is_empty() {
        return Err(SynthError::InsufficientObservations(0));
    }
    let sides: Vec<(&SymFn, Side)> = [(fl, Side::Lhs), (fr, Side::Rhs)]
        .into_iter()
        .filter_map(|(f, s)| f.map(|f| (f, s)))
        .collect();
    let constraint = |p: &IoPair| -> BvFormula {
        BvFormula::And(
            sides
                .iter()
                .map(|(f, s)| pair_constraint(f, *s, args, p, width))
                .collect(),
        )
    };
    let mut solver = Solver::with_budget(SYNTH_CONFLICT_BUDGET);
    let mut admitted = Vec::new();
    let mut dropped = Vec::new();
    let model = if optimistic {
        // The model of the last successful check satisfies every admitted pair.
        let mut last = None;
        for (i, p) in pairs.iter().enumerate() {
            let spent = solver.stats().2;
            if i > 0 && spent >= SYNTH_TOTAL_BUDGET {
                dropped.push(i);
                continue;
            }
            solver.set_budget(SYNTH_CONFLICT_BUDGET.min(SYNTH_TOTAL_BUDGET.saturating_sub(spent)).max(1));
            solver.push();
            solver.assert_formula(constraint(p)).map_err(|_| SynthError::SketchInconsistent)?;
            match solver.check() {
                CheckResult::Sat => {
                    admitted.push(i);
                    last = solver.model().ok().cloned();
                }
                r => {
                    solver.pop().expect("scope pushed above");
                    if i == 0 {
                        return Err(if r == CheckResult::Unsat {
                            SynthError::SketchInconsistent
                        } else {
                            SynthError::SolverUnknown
                        });
                    }
                    // A pair the solver cannot decide in budget is treated
                    // like a contradicting one.
                    dropped.push(i);
                }
            }
        }
        last.expect("the base pair was admitted")
    } else {
        for p in pairs {
            solver.assert_formula(constraint(p)).map_err(|_| SynthError::SketchInconsistent)?;
        }
        admitted = (0..pairs.len()).collect();
        match solver.check() {
            CheckResult::Sat => {}
            CheckResult::Unsat => return Err(SynthError::SketchInconsistent),
            CheckResult::Unknown => return Err(SynthError::SolverUnknown),
        }
        solver.model().expect("sat check leaves a model").clone()
    };
    let values = |f: Option<&SymFn>, side: Side| -> Vec<u64> {
        f.map(|f| {
            (0..f.unknowns.len())
                .map(|i| model.get(&unknown_name(side, i)).copied().unwrap_or(0))
                .collect()
        })
        .unwrap_or_default()
    };
    Ok(Assignment {
        lhs: values(fl, Side::Lhs),
        rhs: values(fr, Side::Rhs),
        admitted,
        dropped,
        conflicts: solver.stats().2,
    })
}

#[cfg(test)]
mod tests;
