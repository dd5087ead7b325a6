//! Branch flipping over one execution trace.
//!
//! Every tainted comparison of a tainted run becomes a predicate over one
//! shared 8-bit variable per input offset. Flipping a branch asserts the
//! negation of its observed outcome; in multi-branch mode the predicates
//! of earlier branches are pinned to their observed outcomes so the new
//! input keeps following the same path up to the target. Bytes outside the
//! target's arguments keep their original values, which is what
//! substitution does to the real input as well.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::branch::BranchId;
use crate::solver::{BvFormula, BvTerm, CheckResult, Model, Solver};
use crate::synth::{
    arg_bytes, build_symfn, collect_io_pairs, extract_sketch, solve_constants, Assignment, IoPair,
    Side, SymFn, SynthError, DEFAULT_INITIAL_PAIRS,
};
use crate::taint::{TaintLabel, UNTAINTED};
use crate::vm::{BranchRecord, TaintRunResult, Vm};

pub const DEFAULT_MAX_ITER: u32 = 10;

/// Pair-collection rounds tried after an unsat flip before calling it infeasible.
const REFINE_ROUNDS: u32 = 4;

/// SAT conflicts one flip may spend on constant solving before giving up.
pub const FLIP_SYNTH_BUDGET: u64 = 24_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipConfig {
    pub max_iter: u32,
    pub initial_pairs: usize,
    pub multi_branch: bool,
    pub optimistic: bool,
    pub seed: u64,
    /// Fault injection: corrupt this many of every thousand observed pairs
    /// (never the base pair) before solving.
    pub corrupt_permille: u32,
}

impl Default for FlipConfig {
    fn default() -> Self {
        FlipConfig {
            max_iter: DEFAULT_MAX_ITER,
            initial_pairs: DEFAULT_INITIAL_PAIRS,
            multi_branch: true,
            optimistic: true,
            seed: 0,
            corrupt_permille: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipStatus {
    Flipped,
    Infeasible,
    SynthesisFailed,
    BudgetExhausted,
    /// Not attempted (the caller filtered it out).
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlipOutcome {
    pub id: BranchId,
    pub status: FlipStatus,
    pub input: Option<Vec<u8>>,
    pub iterations: u32,
    pub pairs: usize,
    /// Pinned branches whose outcome changed on the verification run.
    pub diverged_pins: usize,
    pub error: Option<SynthError>,
}

/// One branch of the trace.
#[derive(Clone, Debug)]
pub struct TraceBranch {
    pub record: BranchRecord,
    pub lhs_label: TaintLabel,
    pub rhs_label: TaintLabel,
    pub fl: Option<SymFn>,
    pub fr: Option<SymFn>,
    /// Union of both sides' argument offsets, ascending.
    pub args: Vec<usize>,
    pub sketch_error: Option<SynthError>,
    pub pairs: Vec<IoPair>,
    pub assignment: Option<Assignment>,
    pub pinned: bool,
}

impl TraceBranch {
    pub fn lines(&self) -> usize {
        self.fl.as_ref().map_or(0, SymFn::num_lines) + self.fr.as_ref().map_or(0, SymFn::num_lines)
    }

    pub fn width(&self) -> u32 {
        self.record.size as u32 * 8
    }
}

pub struct TraceContext {
    pub branches: Vec<TraceBranch>,
    pub base_input: Vec<u8>,
    solver: Solver,
    /// Conflicts spent on constant solving so far.
    synth_conflicts: u64,
}

pub fn byte_var(offset: usize) -> String {
    format!("x{offset}")
}

impl TraceContext {
    /// One entry per distinct branch id, at its first occurrence.
    pub fn from_taint_run(result: &TaintRunResult, base_input: &[u8]) -> TraceContext {
        let mut seen = HashSet::new();
        let mut branches = Vec::new();
        for s in &result.sketches {
            if !seen.insert(s.record.id) {
                continue;
            }
            let side = |label: TaintLabel, side: Side| -> Result<Option<SymFn>, SynthError> {
                if label == UNTAINTED {
                    return Ok(None);
                }
                let sk = extract_sketch(&result.union_table, label, s.record.relop, s.record.size, side)?;
                build_symfn(&sk).map(Some)
            };
            let (fl, fr, err) = match (side(s.lhs_label, Side::Lhs), side(s.rhs_label, Side::Rhs)) {
                (Ok(l), Ok(r)) => (l, r, None),
                (Err(e), _) | (_, Err(e)) => (None, None, Some(e)),
            };
            let args: BTreeSet<usize> = fl
                .iter()
                .chain(fr.iter())
                .flat_map(|f| f.args.iter().copied())
                .collect();
            branches.push(TraceBranch {
                record: s.record,
                lhs_label: s.lhs_label,
                rhs_label: s.rhs_label,
                fl,
                fr,
                args: args.into_iter().collect(),
                sketch_error: err,
                pairs: Vec::new(),
                assignment: None,
                pinned: false,
            });
        }
        TraceContext {
            branches,
            base_input: base_input.to_vec(),
            solver: Solver::new(),
            synth_conflicts: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// The shared solver holding the pins.
    pub fn solver(&mut self) -> &mut Solver {
        &mut self.solver
    }

    /// Predicate of branch `idx` over the global byte variables, using its
    /// solved constants.
    pub fn predicate(&self, idx: usize) -> Option<BvFormula> {
        let b = &self.branches[idx];
        let a = b.assignment.as_ref()?;
        let w = b.width();
        let side = |f: &Option<SymFn>, values: &[u64], observed: u64| -> BvTerm {
            match f {
                Some(f) => f.to_term(
                    &mut |off| BvTerm::var(byte_var(off), 8),
                    &mut |i, width| BvTerm::lit(values[i], width),
                    w,
                ),
                None => BvTerm::lit(observed, w),
            }
        };
        let l = side(&b.fl, &a.lhs, b.record.lhs);
        let r = side(&b.fr, &a.rhs, b.record.rhs);
        Some(BvFormula::rel(b.record.relop, l, r))
    }

    /// Collect observations (if none yet) and solve the constants of `idx`.
    pub fn synthesize(&mut self, idx: usize, vm: &mut Vm<'_>, cfg: &FlipConfig) -> Result<(), SynthError> {
        let b = &self.branches[idx];
        if let Some(e) = &b.sketch_error {
            return Err(e.clone());
        }
        if b.pairs.is_empty() {
            let pairs = collect_io_pairs(
                vm,
                &self.base_input,
                b.record.id,
                &b.args,
                cfg.initial_pairs,
                cfg.seed,
            )?;
            let width = b.width();
            let id = b.record.id;
            let lhs_symbolic = b.fl.is_some();
            self.branches[idx].pairs = pairs;
            if cfg.corrupt_permille > 0 {
                let pairs = &mut self.branches[idx].pairs;
                corrupt_pairs(pairs, lhs_symbolic, width, cfg.seed ^ u64::from(id.0), cfg.corrupt_permille);
            }
        }
        self.resolve(idx, cfg)
    }

    fn resolve(&mut self, idx: usize, cfg: &FlipConfig) -> Result<(), SynthError> {
        let b = &self.branches[idx];
        let a = solve_constants(b.fl.as_ref(), b.fr.as_ref(), &b.args, &b.pairs, b.width(), cfg.optimistic)?;
        self.synth_conflicts += a.conflicts;
        self.branches[idx].assignment = Some(a);
        Ok(())
    }

    /// Assert branch `idx`'s predicate equal to its observed outcome below
    /// every later scope. Returns false when the branch has no predicate.
    pub fn pin_branch(&mut self, idx: usize) -> bool {
        let Some(p) = self.predicate(idx) else {
            return false;
        };
        let f = if self.branches[idx].record.outcome { p } else { p.negate() };
        debug_assert_eq!(self.solver.scope_depth(), 0);
        if self.solver.assert_formula(f).is_err() {
            return false;
        }
        self.branches[idx].pinned = true;
        true
    }

    fn pinned_offsets(&self) -> BTreeSet<usize> {
        self.branches
            .iter()
            .filter(|b| b.pinned)
            .flat_map(|b| b.args.iter().copied())
            .collect()
    }

    /// Try to produce an input that negates branch `idx`, verified by a plain run.
    pub fn flip_branch(&mut self, idx: usize, vm: &mut Vm<'_>, cfg: &FlipConfig) -> FlipOutcome {
        let id = self.branches[idx].record.id;
        let base_outcome = self.branches[idx].record.outcome;
        let mut out = FlipOutcome {
            id,
            status: FlipStatus::BudgetExhausted,
            input: None,
            iterations: 0,
            pairs: 0,
            diverged_pins: 0,
            error: None,
        };
        if let Err(e) = self.synthesize(idx, vm, cfg) {
            out.status = match e {
                SynthError::SolverUnknown => FlipStatus::BudgetExhausted,
                _ => FlipStatus::SynthesisFailed,
            };
            out.pairs = self.branches[idx].pairs.len();
            out.error = Some(e);
            return out;
        }
        let args = self.branches[idx].args.clone();
        let target_args: HashSet<usize> = args.iter().copied().collect();
        let fixed: Vec<usize> = if cfg.multi_branch {
            self.pinned_offsets()
                .into_iter()
                .filter(|o| !target_args.contains(o))
                .collect()
        } else {
            Vec::new()
        };
        let mut blocked: Vec<Vec<u8>> = Vec::new();
        let mut fresh = true;
        let spent_before = self.synth_conflicts;
        for iter in 1..=cfg.max_iter {
            out.iterations = iter;
            if self.synth_conflicts - spent_before >= FLIP_SYNTH_BUDGET {
                out.status = FlipStatus::BudgetExhausted;
                break;
            }
            if !fresh {
                if let Err(e) = self.resolve(idx, cfg) {
                    out.status = match e {
                        SynthError::SolverUnknown => FlipStatus::BudgetExhausted,
                        _ => FlipStatus::SynthesisFailed,
                    };
                    out.error = Some(e);
                    break;
                }
            }
            let pred = self.predicate(idx).expect("resolved above");
            let goal = if base_outcome { pred.negate() } else { pred };
            let (check, model) = {
                let s = if cfg.multi_branch {
                    &mut self.solver
                } else {
                    &mut Solver::new()
                };
                s.push();
                let mut ok = s.assert_formula(goal).is_ok();
                for &o in &fixed {
                    let v = self.base_input.get(o).copied().unwrap_or(0) as u64;
                    ok &= s
                        .assert_formula(BvFormula::eq(BvTerm::var(byte_var(o), 8), BvTerm::lit(v, 8)))
                        .is_ok();
                }
                for bytes in &blocked {
                    let same: Vec<BvFormula> = args
                        .iter()
                        .zip(bytes)
                        .map(|(o, v)| BvFormula::eq(BvTerm::var(byte_var(*o), 8), BvTerm::lit(*v as u64, 8)))
                        .collect();
                    ok &= s.assert_formula(BvFormula::And(same).negate()).is_ok();
                }
                let r = if ok { s.check() } else { CheckResult::Unknown };
                let m = s.model().ok().cloned();
                s.pop().expect("pushed above");
                (r, m)
            };
            fresh = false;
            match check {
                CheckResult::Unsat => {
                    // Unsat only holds for the current constants. Probe with
                    // fresh pairs and retry if they change the constants.
                    match self.refine(idx, vm, cfg, iter, spent_before + FLIP_SYNTH_BUDGET) {
                        Ok(true) => {
                            fresh = true;
                            continue;
                        }
                        Ok(false) => out.status = FlipStatus::Infeasible,
                        Err(e) => {
                            out.status = FlipStatus::SynthesisFailed;
                            out.error = Some(e);
                        }
                    }
                    break;
                }
                CheckResult::Unknown => {
                    out.status = FlipStatus::BudgetExhausted;
                    break;
                }
                CheckResult::Sat => {}
            }
            let candidate = substitute(&self.base_input, &args, &model.expect("sat has a model"));
            vm.execute(&candidate, true);
            let observed = vm.branch_log().iter().find(|r| r.id == id).copied();
            if let Some(r) = observed {
                if r.outcome != base_outcome {
                    out.diverged_pins = self.diverged_pins(idx, vm.branch_log());
                    out.status = FlipStatus::Flipped;
                    out.input = Some(candidate);
                    break;
                }
                let pair = IoPair {
                    arg_bytes: arg_bytes(&candidate, &args),
                    lhs: r.lhs,
                    rhs: r.rhs,
                    outcome: r.outcome,
                };
                let b = &mut self.branches[idx];
                if !b.pairs.contains(&pair) {
                    b.pairs.push(pair);
                }
            }
            blocked.push(arg_bytes(&candidate, &args));
        }
        out.pairs = self.branches[idx].pairs.len();
        out
    }

    /// Add fresh IO pairs and re-solve, for up to `REFINE_ROUNDS` rounds.
    /// Returns whether the constants changed, or true once the constant
    /// solving total passes `limit` so the caller's budget check fires.
    fn refine(
        &mut self,
        idx: usize,
        vm: &mut Vm<'_>,
        cfg: &FlipConfig,
        iter: u32,
        limit: u64,
    ) -> Result<bool, SynthError> {
        let before = self.branches[idx].assignment.as_ref().map(|a| (a.lhs.clone(), a.rhs.clone()));
        for round in 0..REFINE_ROUNDS {
            if self.synth_conflicts >= limit {
                return Ok(true);
            }
            let b = &self.branches[idx];
            let seed = cfg.seed ^ (u64::from(iter) << 32) ^ (u64::from(round) << 48) ^ 0x5eed;
            let n = cfg.initial_pairs.max(DEFAULT_INITIAL_PAIRS);
            let extra = collect_io_pairs(vm, &self.base_input, b.record.id, &b.args, n, seed)?;
            let pairs = &mut self.branches[idx].pairs;
            let known = pairs.len();
            for p in extra {
                if !pairs.contains(&p) {
                    pairs.push(p);
                }
            }
            if pairs.len() == known {
                return Ok(false);
            }
            match self.resolve(idx, cfg) {
                Ok(()) => {}
                Err(SynthError::SolverUnknown) => return Ok(false),
                Err(e) => return Err(e),
            }
            let after = self.branches[idx].assignment.as_ref().map(|a| (a.lhs.clone(), a.rhs.clone()));
            if before != after {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn diverged_pins(&self, idx: usize, log: &[BranchRecord]) -> usize {
        self.branches[..idx]
            .iter()
            .filter(|b| b.pinned)
            .filter(|b| {
                log.iter()
                    .find(|r| r.id == b.record.id)
                    .is_some_and(|r| r.outcome != b.record.outcome)
            })
            .count()
    }

    /// Flip the branch with `id` alone. In multi-branch mode every earlier
    /// branch is synthesized and pinned first. None when the trace has no
    /// such branch. Call at most once per context, since pins accumulate.
    pub fn flip_by_id(&mut self, id: BranchId, vm: &mut Vm<'_>, cfg: &FlipConfig) -> Option<FlipOutcome> {
        let target = self.branches.iter().position(|b| b.record.id == id)?;
        if cfg.multi_branch {
            for idx in 0..target {
                if self.branches[idx].assignment.is_none() {
                    let _ = self.synthesize(idx, vm, cfg);
                }
                self.pin_branch(idx);
            }
        }
        Some(self.flip_branch(target, vm, cfg))
    }

    /// Visit branches in trace order. Branches for which `attempt` returns
    /// true are flipped; in multi-branch mode every branch is then pinned
    /// with whatever predicate could be synthesized for it.
    pub fn flip_all(
        &mut self,
        vm: &mut Vm<'_>,
        cfg: &FlipConfig,
        mut attempt: impl FnMut(&BranchRecord) -> bool,
    ) -> Vec<FlipOutcome> {
        let mut outcomes = Vec::with_capacity(self.branches.len());
        for idx in 0..self.branches.len() {
            let record = self.branches[idx].record;
            let o = if attempt(&record) {
                self.flip_branch(idx, vm, cfg)
            } else {
                if cfg.multi_branch && self.branches[idx].assignment.is_none() {
                    let _ = self.synthesize(idx, vm, cfg);
                }
                FlipOutcome {
                    id: record.id,
                    status: FlipStatus::Skipped,
                    input: None,
                    iterations: 0,
                    pairs: self.branches[idx].pairs.len(),
                    diverged_pins: 0,
                    error: None,
                }
            };
            if cfg.multi_branch {
                self.pin_branch(idx);
            }
            outcomes.push(o);
        }
        outcomes
    }
}

fn corrupt_pairs(pairs: &mut [IoPair], lhs: bool, width: u32, seed: u64, permille: u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mask = crate::bits::mask(width);
    for p in pairs.iter_mut().skip(1) {
        if rng.gen_ratio(permille.min(1000), 1000) {
            let v = if lhs { &mut p.lhs } else { &mut p.rhs };
            *v = (*v ^ (rng.gen::<u64>() | 1)) & mask;
        }
    }
}

/// Replace the bytes at `offsets` with their model values, growing the
/// input with zeros when an offset lies past its end.
pub fn substitute(input: &[u8], offsets: &[usize], model: &Model) -> Vec<u8> {
    let mut out = input.to_vec();
    if let Some(&max) = offsets.iter().max() {
        if max >= out.len() {
            out.resize(max + 1, 0);
        }
    }
    for &o in offsets {
        if let Some(v) = model.get(&byte_var(o)) {
            out[o] = *v as u8;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchReport {
    pub id: BranchId,
    pub location: Option<String>,
    pub lines: usize,
    pub args: usize,
    pub iterations: u32,
    pub pairs: usize,
    pub status: FlipStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipReport {
    pub input_len: usize,
    pub branches: Vec<BranchReport>,
}

impl FlipReport {
    pub fn new(tc: &TraceContext, outcomes: &[FlipOutcome], locate: impl Fn(BranchId) -> Option<String>) -> Self {
        let branches = outcomes
            .iter()
            .map(|o| {
                let b = tc.branches.iter().find(|b| b.record.id == o.id);
                BranchReport {
                    id: o.id,
                    location: locate(o.id),
                    lines: b.map_or(0, TraceBranch::lines),
                    args: b.map_or(0, |b| b.args.len()),
                    iterations: o.iterations,
                    pairs: o.pairs,
                    status: o.status,
                    error: o.error.as_ref().map(ToString::to_string),
                }
            })
            .collect();
        FlipReport {
            input_len: tc.base_input.len(),
            branches,
        }
    }
}

#[cfg(test)]
mod tests;
