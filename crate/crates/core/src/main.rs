use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taintsynth::bench::{run_bench, write_plots, Flags};
use taintsynth::branch::BranchId;
use taintsynth::flip::{FlipConfig, FlipReport, FlipStatus, TraceContext, DEFAULT_MAX_ITER};
use taintsynth::fuzz::{run_campaign, to_hex, Budget, CampaignConfig};
use taintsynth::gen::{generate_target, TargetSpec};
use taintsynth::ir::parse_program;
use taintsynth::taint::TaintConfig;
use taintsynth::vm::{Exit, Limits, LoadedProgram, Vm};

const EXIT_USAGE: u8 = 1;
const EXIT_TARGET: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "taintsynth", version, about = "Taint-guided predicate synthesis and hybrid fuzzing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a program once in plain mode.
    Run {
        program: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run with taint tracking and print the predicate sketch of each branch.
    Taint {
        program: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Synthesize one branch predicate and solve for an input that flips it.
    Flip {
        program: PathBuf,
        #[arg(long, alias = "input")]
        seed: PathBuf,
        /// Branch id, hex with 0x prefix or decimal.
        #[arg(long, value_parser = parse_branch_id)]
        branch: BranchId,
        #[command(flatten)]
        opts: SolveOpts,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a hybrid fuzzing campaign.
    Fuzz {
        program: PathBuf,
        #[arg(long)]
        seed_dir: Option<PathBuf>,
        #[arg(long, default_value = "100000x")]
        budget: Budget,
        #[arg(long, value_enum, default_value = "on")]
        synth: Switch,
        #[command(flatten)]
        opts: SolveOpts,
        /// Write the queue and crashing inputs here.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a benchmark target and its answer key.
    Gen {
        /// Bundled spec name or path to a spec file.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run matched campaigns with synthesis and multi-branch solving toggled.
    Bench {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        seed_dir: Option<PathBuf>,
        #[arg(long, default_value = "60s")]
        budget: Budget,
        #[arg(long, default_value_t = 0)]
        rng: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: u32,
        /// Directory for the plots.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveOpts {
    #[arg(long, default_value_t = 0)]
    rng: u64,
    #[arg(long, value_enum, default_value = "on")]
    multi_branch: Switch,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: u32,
}

impl SolveOpts {
    fn flip_config(&self) -> FlipConfig {
        FlipConfig {
            max_iter: self.max_iter,
            multi_branch: self.multi_branch.on(),
            seed: self.rng,
            ..FlipConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

fn parse_branch_id(s: &str) -> Result<BranchId, String> {
    let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    };
    v.map(BranchId).map_err(|e| format!("bad branch id {s:?}: {e}"))
}

/// A failure with the exit code it maps to.
struct Failure(u8, String);

type CmdResult = Result<u8, Failure>;

fn target_err(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_TARGET, e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| target_err(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<LoadedProgram, Failure> {
    let text = fs::read_to_string(path).map_err(|e| target_err(format!("{}: {e}", path.display())))?;
    let program = parse_program(&text, &path.display().to_string()).map_err(|e| {
        let diags: Vec<String> = e.diagnostics().iter().map(ToString::to_string).collect();
        target_err(if diags.is_empty() { e.to_string() } else { diags.join("\n") })
    })?;
    Ok(LoadedProgram::new(program))
}

fn load_spec(spec: &str) -> Result<TargetSpec, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        return TargetSpec::load(path).map_err(target_err);
    }
    let name = spec.trim_end_matches(".toml");
    let matches: Vec<&str> = TargetSpec::PRESETS.iter().copied().filter(|p| p.starts_with(name)).collect();
    match matches.as_slice() {
        [one] => Ok(TargetSpec::preset(one).expect("listed preset")),
        _ => Err(Failure(
            EXIT_USAGE,
            format!("no spec file or bundled spec {spec:?}; bundled: {}", TargetSpec::PRESETS.join(", ")),
        )),
    }
}

fn load_seeds(dir: Option<&Path>, fallback: Vec<u8>) -> Result<Vec<Vec<u8>>, Failure> {
    let Some(dir) = dir else {
        return Ok(vec![fallback]);
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| target_err(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths.iter().map(|p| read(p)).collect()
}

fn write_report<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    if let Some(path) = path {
        let json = serde_json::to_string_pretty(value).expect("report serializes");
        fs::write(path, json).map_err(|e| target_err(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn exit_text(e: Exit) -> String {
    match e {
        Exit::Halted => "halted".into(),
        Exit::Crashed(id) => format!("crashed({id})"),
        Exit::LimitExceeded => "limit-exceeded".into(),
    }
}

fn cmd_run(program: &Path, input: &Path, report: Option<&Path>) -> CmdResult {
    let p = load_program(program)?;
    let input = read(input)?;
    let r = taintsynth::vm::run_plain(&p, &input, Limits::default());
    println!("{}", exit_text(r.exit));
    println!("steps {}  branches {}  edges {}", r.steps, r.branch_log.len(), r.coverage.count_nonzero());
    #[derive(Serialize)]
    struct RunReport {
        exit: Exit,
        steps: u64,
        edges: usize,
        branches: Vec<taintsynth::vm::BranchRecord>,
    }
    write_report(
        report,
        &RunReport {
            exit: r.exit,
            steps: r.steps,
            edges: r.coverage.count_nonzero(),
            branches: r.branch_log,
        },
    )?;
    Ok(0)
}

fn cmd_taint(program: &Path, input: &Path, report: Option<&Path>) -> CmdResult {
    let p = load_program(program)?;
    let input = read(input)?;
    let mut vm = Vm::new(&p, Limits::default());
    let r = vm.run_tainted(&input, TaintConfig::default()).map_err(target_err)?;
    println!("{}  union entries {}", exit_text(r.run.exit), r.union_table.len());
    let tc = TraceContext::from_taint_run(&r, &input);
    #[derive(Serialize)]
    struct SketchDump {
        id: BranchId,
        relop: String,
        outcome: bool,
        args: Vec<usize>,
        lhs: Option<taintsynth::synth::SymFn>,
        rhs: Option<taintsynth::synth::SymFn>,
        error: Option<String>,
    }
    let mut dump = Vec::new();
    for b in &tc.branches {
        let loc = p
            .site_location(taintsynth::branch::Sid(b.record.id.0))
            .map(|l| format!(" at {l}"))
            .unwrap_or_default();
        println!(
            "branch {}{loc}: {} outcome={} args={:?} lines={}",
            b.record.id,
            b.record.relop,
            b.record.outcome,
            b.args,
            b.lines()
        );
        for (side, f) in [("lhs", &b.fl), ("rhs", &b.fr)] {
            if let Some(f) = f {
                println!("  {side}:");
                for line in f.to_string().lines() {
                    println!("    {line}");
                }
            }
        }
        if let Some(e) = &b.sketch_error {
            println!("  error: {e}");
        }
        dump.push(SketchDump {
            id: b.record.id,
            relop: b.record.relop.to_string(),
            outcome: b.record.outcome,
            args: b.args.clone(),
            lhs: b.fl.clone(),
            rhs: b.fr.clone(),
            error: b.sketch_error.as_ref().map(ToString::to_string),
        });
    }
    write_report(report, &dump)?;
    Ok(0)
}

fn cmd_flip(program: &Path, seed: &Path, branch: BranchId, opts: &SolveOpts, report: Option<&Path>) -> CmdResult {
    let p = load_program(program)?;
    let input = read(seed)?;
    let mut vm = Vm::new(&p, Limits::default());
    let r = vm.run_tainted(&input, TaintConfig::default()).map_err(target_err)?;
    let mut tc = TraceContext::from_taint_run(&r, &input);
    let cfg = opts.flip_config();
    let Some(o) = tc.flip_by_id(branch, &mut vm, &cfg) else {
        let known: Vec<String> = tc.branches.iter().map(|b| b.record.id.to_string()).collect();
        return Err(Failure(
            EXIT_USAGE,
            format!("branch {branch} is not a tainted branch on this input; known: {}", known.join(" ")),
        ));
    };
    let status = serde_json::to_value(o.status).expect("status serializes");
    println!(
        "branch {branch}: {} after {} iteration(s), {} pairs",
        status.as_str().unwrap_or_default(),
        o.iterations,
        o.pairs
    );
    if let Some(new) = &o.input {
        let exit = vm.execute(new, false).exit;
        println!("{}", to_hex(new));
        println!("verified ({})", exit_text(exit));
    }
    if let Some(e) = &o.error {
        println!("error: {e}");
    }
    let locate = |id: BranchId| p.site_location(taintsynth::branch::Sid(id.0)).map(ToString::to_string);
    write_report(report, &FlipReport::new(&tc, std::slice::from_ref(&o), locate))?;
    Ok(if o.status == FlipStatus::Flipped { 0 } else { EXIT_BUDGET })
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuzz(
    program: &Path,
    seed_dir: Option<&Path>,
    budget: Budget,
    synth: Switch,
    opts: &SolveOpts,
    corpus: Option<&Path>,
    report: Option<&Path>,
) -> CmdResult {
    let p = load_program(program)?;
    let seeds = load_seeds(seed_dir, vec![0])?;
    let cfg = CampaignConfig {
        budget,
        rng_seed: opts.rng,
        synth: synth.on(),
        flip: opts.flip_config(),
        corpus_dir: corpus.map(Path::to_path_buf),
        ..CampaignConfig::default()
    };
    let r = run_campaign(&p, &seeds, cfg).map_err(target_err)?;
    println!(
        "execs {}  edges {}  queue {}  bugs {}",
        r.execs,
        r.edges,
        r.queue.initial + r.queue.mutation + r.queue.synthesis,
        r.bugs.len()
    );
    for b in &r.bugs {
        println!("  bug {} at exec {} via {}: {}", b.id, b.execs, b.discovery, b.input_hex);
    }
    println!(
        "flips: {} attempted, {} flipped, {} infeasible",
        r.flips.attempted, r.flips.flipped, r.flips.infeasible
    );
    write_report(report, &r)?;
    Ok(0)
}

fn cmd_gen(spec: &str, out: &Path) -> CmdResult {
    let spec = load_spec(spec)?;
    let t = generate_target(&spec).map_err(target_err)?;
    fs::create_dir_all(out).map_err(target_err)?;
    let ir = out.join(format!("{}.ir", spec.name));
    fs::write(&ir, &t.source).map_err(target_err)?;
    fs::write(out.join("zero.bin"), t.seed()).map_err(target_err)?;
    for a in &t.answers {
        fs::write(out.join(format!("bug_{}.bin", a.bug)), &a.input).map_err(target_err)?;
    }
    write_report(Some(&out.join("answers.json")), &t.answers)?;
    println!("{}: {} bugs, input length {}", ir.display(), t.answers.len(), t.input_len);
    Ok(0)
}

fn cmd_bench(
    spec: &str,
    seed_dir: Option<&Path>,
    budget: Budget,
    rng: u64,
    max_iter: u32,
    out: &Path,
    report: Option<&Path>,
) -> CmdResult {
    let spec = load_spec(spec)?;
    let t = generate_target(&spec).map_err(target_err)?;
    let seeds = load_seeds(seed_dir, t.seed())?;
    let cfg = CampaignConfig {
        budget,
        rng_seed: rng,
        flip: FlipConfig {
            max_iter,
            seed: rng,
            ..FlipConfig::default()
        },
        ..CampaignConfig::default()
    };
    let r = run_bench(&t, &seeds, &cfg, &Flags::ALL).map_err(target_err)?;
    print!("{}", r.summary());
    for path in write_plots(&r, out).map_err(target_err)? {
        println!("wrote {}", path.display());
    }
    write_report(report, &r)?;
    Ok(0)
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.cmd {
        Cmd::Run { program, input, report } => cmd_run(&program, &input, report.as_deref()),
        Cmd::Taint { program, input, report } => cmd_taint(&program, &input, report.as_deref()),
        Cmd::Flip {
            program,
            seed,
            branch,
            opts,
            report,
        } => cmd_flip(&program, &seed, branch, &opts, report.as_deref()),
        Cmd::Fuzz {
            program,
            seed_dir,
            budget,
            synth,
            opts,
            corpus,
            report,
        } => cmd_fuzz(
            &program,
            seed_dir.as_deref(),
            budget,
            synth,
            &opts,
            corpus.as_deref(),
            report.as_deref(),
        ),
        Cmd::Gen { spec, out } => cmd_gen(&spec, &out),
        Cmd::Bench {
            spec,
            seed_dir,
            budget,
            rng,
            max_iter,
            out,
            report,
        } => cmd_bench(&spec, seed_dir.as_deref(), budget, rng, max_iter, &out, report.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
