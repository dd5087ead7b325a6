//! Quantifier-free fixed-width bitvector solver.
//!
//! Formulas are bit-blasted into a single CDCL instance. Each assertion is
//! guarded by its own activation literal and `check` solves under the
//! activation literals of the live assertions, so `push`/`pop` never
//! rebuild anything. Every model is re-checked with the concrete evaluator
//! before it is returned.

mod blast;
pub mod sat;
pub mod term;

use std::collections::BTreeMap;

use thiserror::Error;

pub use term::{eval, eval_formula, to_smtlib, BvFormula, BvTerm, Evaluator, Model, Node};

use blast::Blaster;
use sat::{Lit, SatStatus};

pub const DEFAULT_CONFLICT_BUDGET: u64 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckResult {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("pop without matching push")]
    EmptyScope,
    #[error("model requested without a satisfiable check")]
    NoModel,
    #[error("variable `{name}` used at widths {first} and {second}")]
    WidthConflict { name: String, first: u32, second: u32 },
}

pub struct Solver {
    blaster: Blaster,
    assertions: Vec<(BvFormula, Lit)>,
    scopes: Vec<usize>,
    model: Option<Model>,
    budget: u64,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

impl Solver {
    pub fn new() -> Solver {
        Solver::with_budget(DEFAULT_CONFLICT_BUDGET)
    }

    pub fn with_budget(budget: u64) -> Solver {
        Solver {
            blaster: Blaster::new(),
            assertions: Vec::new(),
            scopes: Vec::new(),
            model: None,
            budget,
        }
    }

    /// Conflict budget for each later `check`.
    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    pub fn assert_formula(&mut self, f: BvFormula) -> Result<(), SolverError> {
        let lit = self.blaster.formula(&f).map_err(|c| SolverError::WidthConflict {
            name: c.name,
            first: c.first,
            second: c.second,
        })?;
        let act = self.blaster.fresh();
        self.blaster.sat.add_clause(&[!act, lit]);
        self.assertions.push((f, act));
        self.model = None;
        Ok(())
    }

    pub fn push(&mut self) {
        self.scopes.push(self.assertions.len());
    }

    pub fn pop(&mut self) -> Result<(), SolverError> {
        let mark = self.scopes.pop().ok_or(SolverError::EmptyScope)?;
        for (_, act) in self.assertions.drain(mark..) {
            self.blaster.sat.add_clause(&[!act]);
        }
        self.model = None;
        Ok(())
    }

    pub fn scope_depth(&self) -> usize {
        self.scopes.len()
    }

    pub fn assertions(&self) -> impl Iterator<Item = &BvFormula> {
        self.assertions.iter().map(|(f, _)| f)
    }

    pub fn check(&mut self) -> CheckResult {
        let assumptions: Vec<Lit> = self.assertions.iter().map(|(_, a)| *a).collect();
        self.model = None;
        match self.blaster.sat.solve(&assumptions, self.budget) {
            SatStatus::Unsat => CheckResult::Unsat,
            SatStatus::Unknown => {
                log::warn!("solver conflict budget of {} exhausted", self.budget);
                CheckResult::Unknown
            }
            SatStatus::Sat => {
                let mut names = BTreeMap::new();
                for (f, _) in &self.assertions {
                    f.vars(&mut names);
                }
                let model: Model = names
                    .keys()
                    .map(|n| (n.clone(), self.blaster.var_value(n).unwrap_or(0)))
                    .collect();
                self.blaster.sat.reset();
                let mut ev = Evaluator::new(&model);
                if let Some((bad, _)) = self.assertions.iter().find(|(f, _)| !ev.formula(f)) {
                    log::error!("model fails re-evaluation of {:?}", bad);
                    return CheckResult::Unknown;
                }
                self.model = Some(model);
                CheckResult::Sat
            }
        }
    }

    pub fn model(&self) -> Result<&Model, SolverError> {
        self.model.as_ref().ok_or(SolverError::NoModel)
    }

    /// Live assertions in SMT-LIB 2 form.
    pub fn to_smtlib(&self) -> String {
        let fs: Vec<BvFormula> = self.assertions.iter().map(|(f, _)| f.clone()).collect();
        to_smtlib(&fs)
    }

    pub fn stats(&self) -> (usize, usize, u64) {
        (
            self.blaster.sat.num_vars(),
            self.blaster.sat.num_clauses(),
            self.blaster.sat.conflicts,
        )
    }
}

#[cfg(test)]
mod tests;
