//! Program generators.
//!
//! [`generate_target`] injects individually numbered bugs, each behind a
//! configurable predicate over its own input bytes, and returns an answer
//! key with one triggering input per bug. [`random_program`] produces
//! arbitrary well-formed programs (branches, loops, calls, memory traffic)
//! for differential testing of the execution modes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{mask, BinOp, Relop};
use crate::ir::{parse_program, IrError, Program};
use crate::vm::{run_plain, Exit, Limits, LoadedProgram};

pub const MAX_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid target spec: {0}")]
    Spec(String),
    #[error("spec parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bug {bug}: no satisfiable predicate after {MAX_RETRIES} attempts")]
    Infeasible { bug: u32 },
    #[error("generated program does not parse: {0}")]
    Ir(#[from] IrError),
    #[error("answer key for bug {bug} produced {got:?}")]
    SelfCheck { bug: u32, got: Exit },
}

fn default_count() -> usize {
    1
}

fn default_relop() -> Relop {
    Relop::Eq
}

/// How one group of bugs is guarded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugRecipe {
    #[serde(default = "default_count")]
    pub count: usize,
    /// Operations applied after the argument bytes are combined.
    pub depth: usize,
    pub ops: Vec<BinOp>,
    pub arg_bytes: usize,
    /// Comparison width in bits.
    pub width: u32,
    #[serde(default = "default_relop")]
    pub relop: Relop,
    /// Equality guards in front of the bug, each over a growing prefix of
    /// the bug's bytes.
    #[serde(default)]
    pub nesting: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    pub seed: u64,
    pub bugs: Vec<BugRecipe>,
}

impl TargetSpec {
    pub fn from_toml(text: &str) -> Result<TargetSpec, GenError> {
        let spec: TargetSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<TargetSpec, GenError> {
        let text = std::fs::read_to_string(path).map_err(|source| GenError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// One of the bundled specs by name.
    pub fn preset(name: &str) -> Option<TargetSpec> {
        let text = match name {
            "magic4" => include_str!("../specs/magic4.toml"),
            "arith_chain" => include_str!("../specs/arith_chain.toml"),
            "nested3" => include_str!("../specs/nested3.toml"),
            "lava_like_64bugs" => include_str!("../specs/lava_like_64bugs.toml"),
            _ => return None,
        };
        Some(Self::from_toml(text).expect("bundled specs are valid"))
    }

    pub const PRESETS: [&'static str; 4] = ["magic4", "arith_chain", "nested3", "lava_like_64bugs"];

    pub fn bug_count(&self) -> usize {
        self.bugs.iter().map(|r| r.count).sum()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Spec(m));
        if self.bugs.is_empty() || self.bug_count() == 0 {
            return bad("at least one bug is required".into());
        }
        for (i, r) in self.bugs.iter().enumerate() {
            if ![8, 16, 32, 64].contains(&r.width) {
                return bad(format!("recipe {i}: width must be 8, 16, 32 or 64"));
            }
            if !(1..=8).contains(&r.arg_bytes) {
                return bad(format!("recipe {i}: arg_bytes must be in 1..=8"));
            }
            if r.depth > 16 || r.nesting > 8 {
                return bad(format!("recipe {i}: depth is capped at 16 and nesting at 8"));
            }
            if r.depth > 0 && r.ops.is_empty() {
                return bad(format!("recipe {i}: ops must be nonempty when depth > 0"));
            }
            if r.relop == Relop::Ne {
                return bad(format!("recipe {i}: ne guards are satisfied by almost every input"));
            }
        }
        Ok(())
    }
}

/// One combining or transforming step of a generated predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Step {
    /// Fold in the next argument byte.
    Byte { op: BinOp, offset: usize },
    Imm { op: BinOp, value: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Predicate {
    first: usize,
    /// `Some(n)` when the first term is an n-byte little-endian read.
    wide: Option<usize>,
    steps: Vec<Step>,
    relop: Relop,
    k: u64,
    width: u32,
}

impl Predicate {
    fn value(&self, input: &[u8]) -> u64 {
        let w = self.width;
        let byte = |o: usize| input.get(o).copied().unwrap_or(0) as u64;
        let mut v = match self.wide {
            Some(n) => (0..n).fold(0u64, |acc, i| acc | byte(self.first + i) << (8 * i)) & mask(w),
            None => byte(self.first),
        };
        for s in &self.steps {
            v = match s {
                Step::Byte { op, offset } => op.eval(v, byte(*offset), w),
                Step::Imm { op, value } => op.eval(v, *value, w),
            };
        }
        v
    }

    fn holds(&self, input: &[u8]) -> bool {
        self.relop.eval(self.value(input), self.k, self.width)
    }

    fn emit(&self, f: &mut FnText) -> String {
        let w = self.width;
        let mut cur = match self.wide {
            Some(n) => {
                let r = f.reg();
                f.line(format!("{r} = in {} {n}", self.first));
                if n * 8 < w as usize {
                    let z = f.reg();
                    f.line(format!("{z} = zext {r} {} {w}", n * 8));
                    z
                } else {
                    r
                }
            }
            None => f.byte(self.first, w),
        };
        for s in &self.steps {
            let (op, rhs) = match s {
                Step::Byte { op, offset } => (*op, f.byte(*offset, w)),
                Step::Imm { op, value } => (*op, format!("{value:#x}")),
            };
            let d = f.reg();
            f.line(format!("{d} = {} {cur} {rhs} {w}", op.mnemonic()));
            cur = d;
        }
        let c = f.reg();
        f.line(format!("{c} = cmp {} {cur} {:#x} {w}", self.relop.mnemonic(), self.k));
        c
    }
}

const COMBINE: [BinOp; 3] = [BinOp::Add, BinOp::Xor, BinOp::Sub];

fn imm_for(op: BinOp, w: u32, rng: &mut ChaCha8Rng) -> u64 {
    match op {
        BinOp::Shl | BinOp::Lshr | BinOp::Ashr => rng.gen_range(1..w as u64),
        BinOp::Mul => rng.gen::<u64>() & mask(w) | 1,
        BinOp::Udiv | BinOp::Sdiv | BinOp::Urem | BinOp::Srem => rng.gen_range(2..=255),
        _ => (rng.gen::<u64>() & mask(w)).max(1),
    }
}

/// Predicate over `offsets` (contiguous) true at `answer` and false at zero.
/// With `wide`, a power-of-two run of bytes is read as one little-endian
/// value; otherwise bytes are folded in one at a time, which leaves many
/// solutions for any single comparison.
#[allow(clippy::too_many_arguments)]
fn predicate(
    offsets: &[usize],
    wide: bool,
    depth: usize,
    ops: &[BinOp],
    width: u32,
    relop: Relop,
    answer: &[u8],
    rng: &mut ChaCha8Rng,
) -> Option<Predicate> {
    let n = offsets.len();
    let wide = (wide && n > 1 && n.is_power_of_two() && n * 8 <= width as usize).then_some(n);
    let mut steps = Vec::new();
    if wide.is_none() {
        for &o in &offsets[1..] {
            steps.push(Step::Byte {
                op: *COMBINE.choose(rng).unwrap(),
                offset: o,
            });
        }
    }
    for _ in 0..depth {
        let op = *ops.choose(rng).unwrap();
        steps.push(Step::Imm {
            op,
            value: imm_for(op, width, rng),
        });
    }
    let mut p = Predicate {
        first: offsets[0],
        wide,
        steps,
        relop,
        k: 0,
        width,
    };
    let zeros = vec![0u8; answer.len()];
    let v = p.value(answer);
    let m = mask(width);
    let mut candidates = vec![v, v.wrapping_add(1) & m, v.wrapping_sub(1) & m, p.value(&zeros)];
    candidates.extend((0..32).map(|_| rng.gen::<u64>() & m));
    for k in candidates {
        p.k = k;
        if p.holds(answer) && !p.holds(&zeros) {
            return Some(p);
        }
    }
    None
}

/// Ground truth for one injected bug.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub bug: u32,
    pub input: Vec<u8>,
    /// Input bytes the bug's predicates read.
    pub offsets: Vec<usize>,
    pub guards: usize,
}

#[derive(Clone, Debug)]
pub struct Target {
    pub spec: TargetSpec,
    pub program: Program,
    pub source: String,
    pub answers: Vec<AnswerKey>,
    pub input_len: usize,
}

impl Target {
    pub fn loaded(&self) -> LoadedProgram {
        LoadedProgram::new(self.program.clone())
    }

    pub fn seed(&self) -> Vec<u8> {
        vec![0; self.input_len]
    }
}

/// Text of one function under construction.
struct FnText {
    body: String,
    next_reg: u32,
    next_label: u32,
}

impl FnText {
    fn new(first_reg: u32) -> Self {
        FnText {
            body: String::new(),
            next_reg: first_reg,
            next_label: 0,
        }
    }

    fn reg(&mut self) -> String {
        self.next_reg += 1;
        format!("r{}", self.next_reg - 1)
    }

    fn label(&mut self, stem: &str) -> String {
        self.next_label += 1;
        format!("{stem}{}", self.next_label - 1)
    }

    fn line(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.body, "  {}", s.as_ref());
    }

    fn place(&mut self, label: &str) {
        let _ = writeln!(self.body, "{label}:");
    }

    /// One input byte widened to `w` bits.
    fn byte(&mut self, offset: usize, w: u32) -> String {
        let r = self.reg();
        self.line(format!("{r} = in {offset} 1"));
        if w == 8 {
            return r;
        }
        let z = self.reg();
        self.line(format!("{z} = zext {r} 8 {w}"));
        z
    }
}

/// Build the program for `spec`, verify each answer key crashes with its bug
/// id and return both.
pub fn generate_target(spec: &TargetSpec) -> Result<Target, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let input_len: usize = spec.bugs.iter().map(|r| r.count * r.arg_bytes).sum();
    let mut f = FnText::new(0);
    let mut answers = Vec::new();
    let mut base = 0usize;
    let mut bug = 0u32;
    for recipe in &spec.bugs {
        for _ in 0..recipe.count {
            bug += 1;
            let offsets: Vec<usize> = (base..base + recipe.arg_bytes).collect();
            let mut found = None;
            for _ in 0..MAX_RETRIES {
                let mut answer = vec![0u8; input_len];
                for &o in &offsets {
                    answer[o] = rng.gen_range(1..=255);
                }
                let guards: Option<Vec<Predicate>> = (1..=recipe.nesting)
                    .map(|j| {
                        let prefix = &offsets[..j.min(offsets.len())];
                        predicate(prefix, false, 1, &[BinOp::Add, BinOp::Xor], recipe.width, Relop::Eq, &answer, &mut rng)
                    })
                    .collect();
                let main = predicate(&offsets, true, recipe.depth, &recipe.ops, recipe.width, recipe.relop, &answer, &mut rng);
                if let (Some(g), Some(m)) = (guards, main) {
                    found = Some((answer, g, m));
                    break;
                }
            }
            let (answer, guards, main) = found.ok_or(GenError::Infeasible { bug })?;
            let skip = f.label("skip");
            let _ = writeln!(f.body, "  ; bug {bug}");
            for g in guards.iter().chain(std::iter::once(&main)) {
                let c = g.emit(&mut f);
                let next = f.label("pass");
                f.line(format!("br {c} @{next} @{skip}"));
                f.place(&next);
            }
            f.line(format!("crash {bug}"));
            f.place(&skip);
            answers.push(AnswerKey {
                bug,
                input: answer,
                offsets,
                guards: recipe.nesting,
            });
            base += recipe.arg_bytes;
        }
    }
    f.line("halt");
    let source = format!("program {}\n\nfn main {{\n{}}}\n", spec.name, f.body);
    let program = parse_program(&source, &format!("{}.ir", spec.name))?;
    let target = Target {
        spec: spec.clone(),
        program,
        source,
        answers,
        input_len,
    };
    self_check(&target)?;
    Ok(target)
}

/// Every answer-key input must crash with its own bug id.
pub fn self_check(t: &Target) -> Result<(), GenError> {
    let p = t.loaded();
    for a in &t.answers {
        let got = run_plain(&p, &a.input, Limits::default()).exit;
        if got != Exit::Crashed(a.bug) {
            return Err(GenError::SelfCheck { bug: a.bug, got });
        }
    }
    Ok(())
}

/// Operations a random predicate recipe may draw from.
pub const PREDICATE_OPS: [BinOp; 11] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Xor,
    BinOp::And,
    BinOp::Or,
    BinOp::Shl,
    BinOp::Lshr,
    BinOp::Ashr,
    BinOp::Udiv,
    BinOp::Urem,
];

/// A one-bug spec with a random predicate: at most three constant
/// operations, width at most 32 and at most four argument bytes.
pub fn random_predicate_spec(seed: u64) -> TargetSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = *[8u32, 16, 32].choose(&mut rng).unwrap();
    let relops = [Relop::Eq, Relop::Ult, Relop::Ugt, Relop::Ule, Relop::Uge, Relop::Slt, Relop::Sgt];
    let n_ops = rng.gen_range(1..=3);
    TargetSpec {
        name: format!("pred{seed}"),
        seed: rng.gen(),
        bugs: vec![BugRecipe {
            count: 1,
            depth: rng.gen_range(1..=3),
            ops: PREDICATE_OPS.choose_multiple(&mut rng, n_ops).copied().collect(),
            arg_bytes: rng.gen_range(1..=4),
            width,
            relop: *relops.choose(&mut rng).unwrap(),
            nesting: 0,
        }],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomProgramConfig {
    pub input_len: usize,
    /// Statements per top-level block.
    pub statements: usize,
    pub helpers: usize,
    /// Bias towards byte-wise copies and mixed-width memory traffic.
    pub memory_heavy: bool,
}

impl Default for RandomProgramConfig {
    fn default() -> Self {
        RandomProgramConfig {
            input_len: 8,
            statements: 12,
            helpers: 2,
            memory_heavy: false,
        }
    }
}

const WIDTHS: [u32; 4] = [8, 16, 32, 64];

struct RandomFn<'a> {
    f: FnText,
    rng: &'a mut ChaCha8Rng,
    cfg: RandomProgramConfig,
    pools: BTreeMap<u32, Vec<String>>,
    /// (name, parameter width, return width) of callable helpers.
    helpers: Vec<(String, u32, u32)>,
    loops: usize,
}

impl<'a> RandomFn<'a> {
    fn def(&mut self, w: u32) -> String {
        let r = self.f.reg();
        self.pools.entry(w).or_default().push(r.clone());
        r
    }

    /// A register of width `w`, created from input or a constant if needed.
    fn value(&mut self, w: u32) -> String {
        if let Some(pool) = self.pools.get(&w) {
            if !pool.is_empty() && self.rng.gen_bool(0.8) {
                return pool.choose(self.rng).unwrap().clone();
            }
        }
        if self.rng.gen_bool(0.7) {
            self.read_input(w)
        } else {
            let v = self.rng.gen::<u64>() & mask(w);
            let r = self.def(w);
            self.f.line(format!("{r} = const {v:#x} {w}"));
            r
        }
    }

    fn operand(&mut self, w: u32) -> String {
        if self.rng.gen_bool(0.3) {
            let v = match self.rng.gen_range(0..4) {
                0 => 0,
                1 => 1,
                2 => self.rng.gen_range(0..w as u64),
                _ => self.rng.gen::<u64>() & mask(w),
            };
            format!("{v:#x}")
        } else {
            self.value(w)
        }
    }

    fn read_input(&mut self, w: u32) -> String {
        let size = w / 8;
        // Occasionally read past the end to exercise zero fill.
        let limit = self.cfg.input_len + 2;
        let off = self.rng.gen_range(0..limit.max(1));
        let r = self.def(w);
        self.f.line(format!("{r} = in {off} {size}"));
        r
    }

    fn addr(&mut self) -> String {
        if self.rng.gen_bool(0.2) {
            let a = self.value(16);
            // Keep register-derived addresses in a small window.
            let m = self.def(16);
            self.f.line(format!("{m} = and {a} 0xff 16"));
            m
        } else {
            format!("{}", self.rng.gen_range(0..64u32) * if self.cfg.memory_heavy { 1 } else { 4 })
        }
    }

    fn arith(&mut self) {
        let w = *WIDTHS.choose(self.rng).unwrap();
        match self.rng.gen_range(0..6) {
            0 => {
                let op = if self.rng.gen() { "not" } else { "neg" };
                let a = self.operand(w);
                let d = self.def(w);
                self.f.line(format!("{d} = {op} {a} {w}"));
            }
            1 => {
                let to = *WIDTHS.choose(self.rng).unwrap();
                if to == w {
                    let a = self.value(w);
                    let d = self.def(w);
                    self.f.line(format!("{d} = mov {a} {w}"));
                    return;
                }
                let op = if to < w {
                    "trunc"
                } else if self.rng.gen() {
                    "zext"
                } else {
                    "sext"
                };
                let a = self.value(w);
                let d = self.def(to);
                self.f.line(format!("{d} = {op} {a} {w} {to}"));
            }
            _ => {
                let op = *BinOp::ALL.choose(self.rng).unwrap();
                let a = self.operand(w);
                let b = self.operand(w);
                let d = self.def(w);
                self.f.line(format!("{d} = {} {a} {b} {w}", op.mnemonic()));
            }
        }
    }

    fn memory(&mut self) {
        if self.cfg.memory_heavy && self.rng.gen_bool(0.5) {
            // Byte-wise copy of input into memory, then a wide read back.
            let n = *[2usize, 4, 8].choose(self.rng).unwrap();
            let src = self.rng.gen_range(0..self.cfg.input_len.max(1));
            let dst = self.rng.gen_range(0..32u32) * 8;
            for i in 0..n {
                let b = self.def(8);
                self.f.line(format!("{b} = in {} 1", src + i));
                self.f.line(format!("store {} {b} 1", dst + i as u32));
            }
            let w = n as u32 * 8;
            let r = self.def(w);
            self.f.line(format!("{r} = load {dst} {n}"));
            for i in 0..n {
                let part = self.def(8);
                self.f.line(format!("{part} = load {} 1", dst + i as u32));
            }
            return;
        }
        let w = *WIDTHS.choose(self.rng).unwrap();
        if self.rng.gen() {
            let a = self.addr();
            let v = self.operand(w);
            self.f.line(format!("store {a} {v} {}", w / 8));
        } else {
            let a = self.addr();
            let d = self.def(w);
            self.f.line(format!("{d} = load {a} {}", w / 8));
        }
    }

    fn cond(&mut self) -> String {
        let w = *WIDTHS.choose(self.rng).unwrap();
        let relop = *Relop::ALL.choose(self.rng).unwrap();
        let a = self.value(w);
        let b = self.operand(w);
        let c = self.def(8);
        self.f.line(format!("{c} = cmp {} {a} {b} {w}", relop.mnemonic()));
        c
    }

    fn block(&mut self, n: usize, depth: usize) {
        for _ in 0..n {
            self.statement(depth);
        }
    }

    fn statement(&mut self, depth: usize) {
        let choice = self.rng.gen_range(0..20);
        let heavy = self.cfg.memory_heavy;
        match choice {
            0..=5 if !heavy => self.arith(),
            0..=2 => self.arith(),
            3..=8 => self.memory(),
            9 | 10 => {
                self.cond();
            }
            11 | 12 if depth > 0 => {
                let c = self.cond();
                let (t, e, end) = (self.f.label("then"), self.f.label("else"), self.f.label("join"));
                self.f.line(format!("br {c} @{t} @{e}"));
                self.f.place(&t);
                let k = self.rng.gen_range(1..4);
                self.block(k, depth - 1);
                self.f.line(format!("jmp @{end}"));
                self.f.place(&e);
                let k = self.rng.gen_range(0..3);
                self.block(k, depth - 1);
                self.f.place(&end);
            }
            13 if depth > 0 && self.loops < 3 => {
                self.loops += 1;
                let n = self.rng.gen_range(1..6);
                let ctr = self.def(8);
                self.f.line(format!("{ctr} = const {n} 8"));
                let (head, out) = (self.f.label("loop"), self.f.label("done"));
                self.f.place(&head);
                let k = self.rng.gen_range(1..4);
                self.block(k, depth - 1);
                self.f.line(format!("{ctr} = sub {ctr} 1 8"));
                let c = self.def(8);
                self.f.line(format!("{c} = cmp ne {ctr} 0 8"));
                self.f.line(format!("br {c} @{head} @{out}"));
                self.f.place(&out);
            }
            14 if depth > 0 => {
                let w = *[8u32, 16].choose(self.rng).unwrap();
                let v = self.value(w);
                let k = self.rng.gen_range(1..4);
                let mut cases: Vec<u64> = (0..k).map(|_| self.rng.gen_range(0..8)).collect();
                cases.sort_unstable();
                cases.dedup();
                let labels: Vec<String> = cases.iter().map(|_| self.f.label("case")).collect();
                let (dflt, end) = (self.f.label("default"), self.f.label("esac"));
                let arms: Vec<String> = cases.iter().zip(&labels).map(|(c, l)| format!("{c} -> @{l}")).collect();
                self.f.line(format!("switch {v} [{}] @{dflt}", arms.join(", ")));
                for l in labels.iter().chain(std::iter::once(&dflt)) {
                    self.f.place(l);
                    let k = self.rng.gen_range(0..3);
                    self.block(k, depth - 1);
                    self.f.line(format!("jmp @{end}"));
                }
                self.f.place(&end);
            }
            15 | 16 if !self.helpers.is_empty() => {
                let (name, pw, rw) = self.helpers.choose(self.rng).unwrap().clone();
                let a = self.operand(pw);
                let d = self.def(rw);
                self.f.line(format!("{d} = call {name} {a}"));
            }
            17 if depth > 0 => {
                let c = self.cond();
                let (bad, ok) = (self.f.label("bug"), self.f.label("ok"));
                self.f.line(format!("br {c} @{bad} @{ok}"));
                self.f.place(&bad);
                let id = self.rng.gen_range(1..=4);
                self.f.line(format!("crash {id}"));
                self.f.place(&ok);
            }
            _ => self.arith(),
        }
    }
}

/// A random well-formed program. Every loop is bounded and calls only go
/// to earlier helpers, so every run terminates.
pub fn random_program(rng: &mut ChaCha8Rng, cfg: RandomProgramConfig) -> Program {
    let mut text = String::from("program random\n");
    let mut helpers: Vec<(String, u32, u32)> = Vec::new();
    for h in 0..cfg.helpers {
        let pw = *WIDTHS.choose(rng).unwrap();
        let rw = *WIDTHS.choose(rng).unwrap();
        let name = format!("helper{h}");
        let mut rf = RandomFn {
            f: FnText::new(1),
            rng,
            cfg,
            pools: BTreeMap::from([(pw, vec!["r0".to_string()])]),
            helpers: helpers.clone(),
            loops: 0,
        };
        let n = rf.rng.gen_range(1..=cfg.statements / 2 + 1);
        rf.block(n, 1);
        let ret = rf.value(rw);
        rf.f.line(format!("ret {ret}"));
        let _ = write!(text, "\nfn {name}(r0:{pw}) -> {rw} {{\n{}}}\n", rf.f.body);
        helpers.push((name, pw, rw));
    }
    let mut rf = RandomFn {
        f: FnText::new(0),
        rng,
        cfg,
        pools: BTreeMap::new(),
        helpers,
        loops: 0,
    };
    rf.block(cfg.statements, 2);
    rf.f.line("halt");
    let _ = write!(text, "\nfn main {{\n{}}}\n", rf.f.body);
    parse_program(&text, "random.ir").unwrap_or_else(|e| panic!("generated program is invalid: {e}\n{text}"))
}

#[cfg(test)]
mod tests;
