//! Hybrid fuzzing campaign: a coverage-guided mutation fuzzer whose seeds
//! are also handed, once each, to the branch flipper. Flip-generated inputs
//! that add coverage join the queue like any other interesting input.
//!
//! Everything runs on one VM in one thread, so a campaign with an
//! execution budget is a pure function of its inputs and rng seed.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::{BranchId, CoverageBitmap};
use crate::flip::{FlipConfig, FlipStatus, TraceContext};
use crate::mutate::{deterministic, havoc, Stage};
use crate::taint::TaintConfig;
use crate::vm::{Exit, Limits, LoadedProgram, Vm};

pub const COVERAGE_SAMPLE_INTERVAL: u64 = 1000;
pub const DEFAULT_HAVOC_ROUNDS: u32 = 256;
pub const DEFAULT_MAX_INPUT_LEN: usize = 1024;
/// Seeds longer than this skip the deterministic stages.
pub const DETERMINISTIC_MAX_LEN: usize = 64;
/// Overread-driven growth attempts per taint run.
const MAX_GROWTH_ROUNDS: usize = 4;

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("no seeds given")]
    NoSeeds,
    #[error("corpus i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Execs(u64),
    Time(Duration),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("budget must look like 60s, 5m or 100000x, got `{0}`")]
pub struct BudgetParseError(String);

impl FromStr for Budget {
    type Err = BudgetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || BudgetParseError(s.to_string());
        let s = s.trim();
        let (num, unit) = s.split_at(s.len().saturating_sub(1));
        let n: u64 = num.parse().map_err(|_| err())?;
        match unit {
            "s" => Ok(Budget::Time(Duration::from_secs(n))),
            "m" => Ok(Budget::Time(Duration::from_secs(n * 60))),
            "x" => Ok(Budget::Execs(n)),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Execs(n) => write!(f, "{n}x"),
            Budget::Time(d) => write!(f, "{}s", d.as_secs()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discovery {
    Initial,
    Mutation,
    Synthesis,
}

impl fmt::Display for Discovery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Discovery::Initial => "initial",
            Discovery::Mutation => "mutation",
            Discovery::Synthesis => "synthesis",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seed {
    pub id: usize,
    pub bytes: Vec<u8>,
    pub discovery: Discovery,
    pub synth_done: bool,
    pub det_done: bool,
    pub times_fuzzed: u32,
    /// Slots that were new or moved up a bucket when the seed was admitted.
    pub new_slots: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub budget: Budget,
    pub rng_seed: u64,
    pub synth: bool,
    pub flip: FlipConfig,
    pub limits: Limits,
    pub taint: TaintConfig,
    pub havoc_rounds: u32,
    pub deterministic: bool,
    pub max_input_len: usize,
    #[serde(skip)]
    pub corpus_dir: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            budget: Budget::Execs(100_000),
            rng_seed: 0,
            synth: true,
            flip: FlipConfig::default(),
            limits: Limits::default(),
            taint: TaintConfig::default(),
            havoc_rounds: DEFAULT_HAVOC_ROUNDS,
            deterministic: true,
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            corpus_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSample {
    pub execs: u64,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugHit {
    pub id: u32,
    /// Execution count at the first triggering run.
    pub execs: u64,
    pub discovery: Discovery,
    pub input_hex: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipStats {
    pub taint_runs: u64,
    pub attempted: u64,
    pub flipped: u64,
    pub infeasible: u64,
    pub synthesis_failed: u64,
    pub budget_exhausted: u64,
    /// Branches whose opposite outcome was already covered.
    pub skipped: u64,
    /// Verified flips that also became queue entries.
    pub admitted: u64,
    pub diverged_pins: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub initial: usize,
    pub mutation: usize,
    pub synthesis: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub execs: u64,
    /// Wall-clock time; the only field that differs between identical reruns.
    pub elapsed_ms: u64,
    pub edges: usize,
    pub coverage: Vec<CoverageSample>,
    pub bugs: Vec<BugHit>,
    pub flips: FlipStats,
    pub queue: QueueStats,
    /// Synthesized function size (lines, both sides) over every sketched branch.
    pub lines_histogram: BTreeMap<usize, usize>,
    /// Argument byte count over every sketched branch.
    pub args_histogram: BTreeMap<usize, usize>,
}

impl CampaignReport {
    pub fn bug_ids(&self) -> Vec<u32> {
        self.bugs.iter().map(|b| b.id).collect()
    }
}

/// Median of a value -> count histogram, or 0 when empty.
pub fn histogram_median(h: &BTreeMap<usize, usize>) -> usize {
    let total: usize = h.values().sum();
    let mut seen = 0;
    for (&v, &n) in h {
        seen += n;
        if 2 * seen >= total && total > 0 {
            return v;
        }
    }
    0
}

pub struct Campaign<'p> {
    cfg: CampaignConfig,
    vm: Vm<'p>,
    rng: ChaCha8Rng,
    queue: Vec<Seed>,
    global: CoverageBitmap,
    outcomes: HashSet<(BranchId, bool)>,
    bugs: Vec<BugHit>,
    flips: FlipStats,
    coverage: Vec<CoverageSample>,
    next_sample: u64,
    lines_histogram: BTreeMap<usize, usize>,
    args_histogram: BTreeMap<usize, usize>,
    crash_files: usize,
    start: Instant,
}

/// Stop signal for the campaign loop.
struct OutOfBudget;

impl<'p> Campaign<'p> {
    pub fn new(program: &'p LoadedProgram, cfg: CampaignConfig) -> Self {
        let vm = Vm::new(program, cfg.limits);
        Campaign {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
            vm,
            queue: Vec::new(),
            global: CoverageBitmap::new(),
            outcomes: HashSet::new(),
            bugs: Vec::new(),
            flips: FlipStats::default(),
            coverage: Vec::new(),
            next_sample: COVERAGE_SAMPLE_INTERVAL,
            lines_histogram: BTreeMap::new(),
            args_histogram: BTreeMap::new(),
            crash_files: 0,
            start: Instant::now(),
        }
    }

    pub fn queue(&self) -> &[Seed] {
        &self.queue
    }

    pub fn global_coverage(&self) -> &CoverageBitmap {
        &self.global
    }

    fn execs(&self) -> u64 {
        self.vm.runs()
    }

    fn exhausted(&self) -> bool {
        match self.cfg.budget {
            Budget::Execs(n) => self.execs() >= n,
            Budget::Time(d) => self.start.elapsed() >= d,
        }
    }

    fn check_budget(&self) -> Result<(), OutOfBudget> {
        if self.exhausted() {
            Err(OutOfBudget)
        } else {
            Ok(())
        }
    }

    fn sample(&mut self) {
        while self.execs() >= self.next_sample {
            self.coverage.push(CoverageSample {
                execs: self.next_sample,
                edges: self.global.count_nonzero(),
            });
            self.next_sample += COVERAGE_SAMPLE_INTERVAL;
        }
    }

    /// Run one candidate, record crashes and admit it when it adds coverage.
    /// Returns whether it was queued.
    fn evaluate(&mut self, input: &[u8], discovery: Discovery) -> Result<bool, FuzzError> {
        let summary = self.vm.execute(input, true);
        for r in self.vm.branch_log() {
            self.outcomes.insert((r.id, r.outcome));
        }
        let interesting = self.global.is_interesting(self.vm.coverage());
        let new_slots = if interesting {
            let run = self.vm.coverage();
            run.touched()
                .iter()
                .filter(|&&i| {
                    crate::branch::bucket(run.get(i as usize)) > crate::branch::bucket(self.global.get(i as usize))
                })
                .count()
        } else {
            0
        };
        self.global.merge_max(self.vm.coverage());
        let execs = self.execs();
        self.sample();
        let mut queued = false;
        match summary.exit {
            Exit::Crashed(id) => {
                if !self.bugs.iter().any(|b| b.id == id) {
                    log::info!("bug {id} first hit at exec {execs} via {discovery}");
                    self.bugs.push(BugHit {
                        id,
                        execs,
                        discovery,
                        input_hex: to_hex(input),
                    });
                    self.save_crash(id, input)?;
                }
            }
            Exit::Halted if interesting => {
                let seed = Seed {
                    id: self.queue.len(),
                    bytes: input.to_vec(),
                    discovery,
                    synth_done: false,
                    det_done: false,
                    times_fuzzed: 0,
                    new_slots,
                };
                self.save_seed(&seed)?;
                self.queue.push(seed);
                queued = true;
            }
            _ => {}
        }
        Ok(queued)
    }

    fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), FuzzError> {
        let io = |source, path: &Path| FuzzError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(e, &path))
    }

    fn save_seed(&self, seed: &Seed) -> Result<(), FuzzError> {
        match &self.cfg.corpus_dir {
            Some(dir) => Self::write_file(
                &dir.join("queue"),
                &format!("id_{:06}_{}", seed.id, seed.discovery),
                &seed.bytes,
            ),
            None => Ok(()),
        }
    }

    fn save_crash(&mut self, id: u32, input: &[u8]) -> Result<(), FuzzError> {
        let n = self.crash_files;
        self.crash_files += 1;
        match &self.cfg.corpus_dir {
            Some(dir) => Self::write_file(&dir.join("crashes"), &format!("bug_{id}_{n:06}"), input),
            None => Ok(()),
        }
    }

    /// Seeds never fuzzed come first; among equals, synthesis-discovered and
    /// shorter seeds win, then age.
    fn pick(&self) -> usize {
        self.queue
            .iter()
            .min_by_key(|s| {
                (
                    s.times_fuzzed,
                    s.discovery != Discovery::Synthesis,
                    s.bytes.len(),
                    s.id,
                )
            })
            .map(|s| s.id)
            .expect("queue is never empty while fuzzing")
    }

    fn synth_phase(&mut self, idx: usize) -> Result<Result<(), OutOfBudget>, FuzzError> {
        self.queue[idx].synth_done = true;
        let mut input = self.queue[idx].bytes.clone();
        let mut result = None;
        for _ in 0..MAX_GROWTH_ROUNDS {
            self.flips.taint_runs += 1;
            let r = match self.vm.run_tainted(&input, self.cfg.taint) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("taint run of seed {idx} failed: {e}");
                    return Ok(Ok(()));
                }
            };
            match r.run.overread {
                Some(need) if (need as usize) > input.len() && (need as usize) <= self.cfg.max_input_len => {
                    input.resize(need as usize, 0);
                }
                _ => {
                    result = Some(r);
                    break;
                }
            }
        }
        let Some(taint) = result else {
            return Ok(Ok(()));
        };
        if input.len() != self.queue[idx].bytes.len() {
            self.evaluate(&input, Discovery::Synthesis)?;
        }
        let mut tc = TraceContext::from_taint_run(&taint, &input);
        let flip_cfg = FlipConfig {
            seed: self.rng.gen(),
            ..self.cfg.flip
        };
        for b in &tc.branches {
            if b.fl.is_some() || b.fr.is_some() {
                *self.lines_histogram.entry(b.lines()).or_default() += 1;
                *self.args_histogram.entry(b.args.len()).or_default() += 1;
            }
        }
        for i in 0..tc.len() {
            if let Err(stop) = self.check_budget() {
                return Ok(Err(stop));
            }
            let rec = tc.branches[i].record;
            if self.outcomes.contains(&(rec.id, !rec.outcome)) {
                self.flips.skipped += 1;
                if flip_cfg.multi_branch && tc.branches[i].assignment.is_none() {
                    let _ = tc.synthesize(i, &mut self.vm, &flip_cfg);
                }
            } else {
                self.flips.attempted += 1;
                let o = tc.flip_branch(i, &mut self.vm, &flip_cfg);
                log::debug!("flip {} -> {:?} after {} iterations", rec.id, o.status, o.iterations);
                match o.status {
                    FlipStatus::Flipped => self.flips.flipped += 1,
                    FlipStatus::Infeasible => self.flips.infeasible += 1,
                    FlipStatus::SynthesisFailed => self.flips.synthesis_failed += 1,
                    FlipStatus::BudgetExhausted => self.flips.budget_exhausted += 1,
                    FlipStatus::Skipped => self.flips.skipped += 1,
                }
                self.flips.diverged_pins += o.diverged_pins as u64;
                if let Some(new_input) = o.input {
                    if self.evaluate(&new_input, Discovery::Synthesis)? {
                        self.flips.admitted += 1;
                    }
                }
            }
            if flip_cfg.multi_branch {
                tc.pin_branch(i);
            }
        }
        self.sample();
        Ok(Ok(()))
    }

    fn fuzz_phase(&mut self, idx: usize) -> Result<Result<(), OutOfBudget>, FuzzError> {
        let base = self.queue[idx].bytes.clone();
        if self.cfg.deterministic && !self.queue[idx].det_done && base.len() <= DETERMINISTIC_MAX_LEN {
            self.queue[idx].det_done = true;
            for stage in Stage::DETERMINISTIC {
                for child in deterministic(&base, stage) {
                    if let Err(stop) = self.check_budget() {
                        return Ok(Err(stop));
                    }
                    self.evaluate(&child, Discovery::Mutation)?;
                }
            }
        }
        for _ in 0..self.cfg.havoc_rounds {
            if let Err(stop) = self.check_budget() {
                return Ok(Err(stop));
            }
            let child = havoc(&base, &mut self.rng, self.cfg.max_input_len);
            self.evaluate(&child, Discovery::Mutation)?;
        }
        Ok(Ok(()))
    }

    pub fn run(mut self, seeds: &[Vec<u8>]) -> Result<CampaignReport, FuzzError> {
        if seeds.is_empty() {
            return Err(FuzzError::NoSeeds);
        }
        for s in seeds {
            self.evaluate(s, Discovery::Initial)?;
        }
        if self.queue.is_empty() {
            // Every seed crashed or added nothing; keep the first so there is
            // something to mutate.
            let bytes = seeds[0].clone();
            self.queue.push(Seed {
                id: 0,
                bytes,
                discovery: Discovery::Initial,
                synth_done: false,
                det_done: false,
                times_fuzzed: 0,
                new_slots: 0,
            });
        }
        while !self.exhausted() {
            let idx = self.pick();
            if self.cfg.synth && !self.queue[idx].synth_done && self.synth_phase(idx)?.is_err() {
                break;
            }
            let stop = self.fuzz_phase(idx)?;
            self.queue[idx].times_fuzzed += 1;
            if stop.is_err() {
                break;
            }
        }
        Ok(self.report())
    }

    fn report(mut self) -> CampaignReport {
        self.sample();
        let mut queue = QueueStats::default();
        for s in &self.queue {
            match s.discovery {
                Discovery::Initial => queue.initial += 1,
                Discovery::Mutation => queue.mutation += 1,
                Discovery::Synthesis => queue.synthesis += 1,
            }
        }
        CampaignReport {
            execs: self.execs(),
            elapsed_ms: self.start.elapsed().as_millis() as u64,
            edges: self.global.count_nonzero(),
            coverage: self.coverage,
            bugs: self.bugs,
            flips: self.flips,
            queue,
            lines_histogram: self.lines_histogram,
            args_histogram: self.args_histogram,
            config: self.cfg,
        }
    }
}

pub fn run_campaign(
    program: &LoadedProgram,
    seeds: &[Vec<u8>],
    cfg: CampaignConfig,
) -> Result<CampaignReport, FuzzError> {
    Campaign::new(program, cfg).run(seeds)
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    let s = s.trim();
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}
