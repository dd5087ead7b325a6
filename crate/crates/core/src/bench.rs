//! Matched campaigns over a generated target: synthesis on/off crossed with
//! multi-branch solving on/off. Every configuration gets the same seed corpus
//! and rng seed, so differences come from the two flags alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzz::{histogram_median, run_campaign, Budget, CampaignConfig, CampaignReport, FuzzError};
use crate::gen::Target;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Fuzz(#[from] FuzzError),
    #[error("report lists bug {bug} which the target does not define")]
    UnknownBug { bug: u32 },
    #[error("plot: {0}")]
    Plot(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub synth: bool,
    pub multi_branch: bool,
}

impl Flags {
    pub const ALL: [Flags; 4] = [
        Flags { synth: true, multi_branch: true },
        Flags { synth: true, multi_branch: false },
        Flags { synth: false, multi_branch: true },
        Flags { synth: false, multi_branch: false },
    ];

    pub fn label(&self) -> String {
        let on = |b: bool| if b { "on" } else { "off" };
        format!("synth-{}/mb-{}", on(self.synth), on(self.multi_branch))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchColumn {
    pub label: String,
    pub flags: Flags,
    pub report: CampaignReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub target: String,
    pub bug_count: usize,
    pub columns: Vec<BenchColumn>,
    /// Bug id to the first-hit execution count in each column.
    pub bug_matrix: BTreeMap<u32, Vec<Option<u64>>>,
    /// Merged over the synthesis-enabled columns.
    pub lines_histogram: BTreeMap<usize, usize>,
    pub args_histogram: BTreeMap<usize, usize>,
    pub median_lines: usize,
    pub median_args: usize,
}

impl BenchReport {
    pub fn bugs_found(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c.report.bugs.len()).collect()
    }

    /// One row per column: label, bugs found, edges, executions.
    pub fn summary(&self) -> String {
        let mut s = format!("{} ({} bugs)\n", self.target, self.bug_count);
        for c in &self.columns {
            s += &format!(
                "{:<20} bugs {:>3}  edges {:>5}  execs {:>8}  flipped {:>5}\n",
                c.label,
                c.report.bugs.len(),
                c.report.edges,
                c.report.execs,
                c.report.flips.flipped
            );
        }
        s += &format!("median SymFn: {} lines, {} args\n", self.median_lines, self.median_args);
        s
    }
}

/// Run all four configurations on `target`, in parallel threads.
pub fn run_bench(
    target: &Target,
    seeds: &[Vec<u8>],
    base: &CampaignConfig,
    flags: &[Flags],
) -> Result<BenchReport, BenchError> {
    let program = target.loaded();
    let results: Vec<Result<CampaignReport, FuzzError>> = std::thread::scope(|s| {
        let handles: Vec<_> = flags
            .iter()
            .map(|f| {
                let mut cfg = base.clone();
                cfg.synth = f.synth;
                cfg.flip.multi_branch = f.multi_branch;
                if let Some(dir) = &base.corpus_dir {
                    cfg.corpus_dir = Some(dir.join(f.label().replace('/', "_")));
                }
                let program = &program;
                s.spawn(move || run_campaign(program, seeds, cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("campaign thread panicked")).collect()
    });
    let mut columns = Vec::new();
    for (f, r) in flags.iter().zip(results) {
        columns.push(BenchColumn {
            label: f.label(),
            flags: *f,
            report: r?,
        });
    }

    let known: Vec<u32> = target.answers.iter().map(|a| a.bug).collect();
    let mut bug_matrix: BTreeMap<u32, Vec<Option<u64>>> = known.iter().map(|&b| (b, vec![None; columns.len()])).collect();
    for (i, c) in columns.iter().enumerate() {
        for hit in &c.report.bugs {
            let row = bug_matrix.get_mut(&hit.id).ok_or(BenchError::UnknownBug { bug: hit.id })?;
            row[i] = Some(hit.execs);
        }
    }

    let mut lines_histogram = BTreeMap::new();
    let mut args_histogram = BTreeMap::new();
    for c in columns.iter().filter(|c| c.flags.synth) {
        for (k, v) in &c.report.lines_histogram {
            *lines_histogram.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &c.report.args_histogram {
            *args_histogram.entry(*k).or_insert(0) += v;
        }
    }
    Ok(BenchReport {
        target: target.spec.name.clone(),
        bug_count: target.answers.len(),
        columns,
        bug_matrix,
        median_lines: histogram_median(&lines_histogram),
        median_args: histogram_median(&args_histogram),
        lines_histogram,
        args_histogram,
    })
}

const COLORS: [RGBColor; 4] = [RED, BLUE, GREEN, MAGENTA];

fn x_limit(report: &BenchReport) -> u64 {
    let max = report.columns.iter().map(|c| c.report.execs).max().unwrap_or(0);
    max.max(1)
}

fn plot_err<E: std::fmt::Display>(e: E) -> BenchError {
    BenchError::Plot(e.to_string())
}

fn draw<F>(path: &Path, title: &str, y_desc: &str, y_max: u64, report: &BenchReport, series: F) -> Result<(), BenchError>
where
    F: Fn(&CampaignReport) -> Vec<(u64, u64)>,
{
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0..x_limit(report), 0..y_max.max(1) + 1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("executions")
        .y_desc(y_desc)
        .draw()
        .map_err(plot_err)?;
    for (i, c) in report.columns.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(series(&c.report), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Write `coverage.svg` and `bugs.svg` into `dir`, returning their paths.
pub fn write_plots(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let coverage = dir.join("coverage.svg");
    let bugs = dir.join("bugs.svg");
    let max_edges = report.columns.iter().map(|c| c.report.edges as u64).max().unwrap_or(0);
    draw(&coverage, &format!("{}: coverage", report.target), "edges", max_edges, report, |r| {
        let mut pts: Vec<(u64, u64)> = r.coverage.iter().map(|s| (s.execs, s.edges as u64)).collect();
        pts.push((r.execs, r.edges as u64));
        pts
    })?;
    draw(&bugs, &format!("{}: bugs found", report.target), "bugs", report.bug_count as u64, report, |r| {
        // Step curve: flat until each hit, then up by one.
        let mut hits: Vec<u64> = r.bugs.iter().map(|b| b.execs).collect();
        hits.sort_unstable();
        let mut pts = vec![(0, 0)];
        for (i, x) in hits.iter().enumerate() {
            pts.push((*x, i as u64));
            pts.push((*x, i as u64 + 1));
        }
        pts.push((r.execs, hits.len() as u64));
        pts
    })?;
    Ok(vec![coverage, bugs])
}

/// Default configuration for bench campaigns with the given budget and rng seed.
pub fn bench_config(budget: Budget, rng_seed: u64) -> CampaignConfig {
    CampaignConfig {
        budget,
        rng_seed,
        ..CampaignConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{generate_target, TargetSpec};

    #[test]
    fn four_columns_and_plots() {
        let t = generate_target(&TargetSpec::preset("magic4").unwrap()).unwrap();
        let cfg = bench_config(Budget::Execs(3_000), 1);
        let r = run_bench(&t, &[t.seed()], &cfg, &Flags::ALL).unwrap();
        assert_eq!(r.columns.len(), 4);
        assert_eq!(r.bug_matrix.len(), 4);
        let found = r.bugs_found();
        assert_eq!(found[0], 4, "{}", r.summary());
        assert_eq!(found[2], 0);
        assert!(r.median_lines > 0 && r.median_args > 0);
        let dir = tempfile::tempdir().unwrap();
        for p in write_plots(&r, dir.path()).unwrap() {
            let svg = std::fs::read_to_string(p).unwrap();
            assert!(svg.starts_with("<svg") && svg.contains("synth-on/mb-on"));
        }
    }
}
