//! Command implementations behind the `fflab` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{group_label, CellConfig, ConfigError, ExperimentConfig};
use crate::io::{self, TraceSummary};
use crate::metrics::{
    self, compare_to_baseline, cumulative_success_from_times, Alternative, ComparisonRow,
    SampleSummary, TestVariant,
};
use crate::reference::ReferenceMode;
use crate::sim::{run_episode, EpisodeTrace};
use crate::spline::{fit_per_window, fit_windows, CUBIC};

#[derive(Debug, Parser)]
#[command(name = "fflab", version, about = "Trajectory representations for compliant admittance control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a trajectory log into a spline dataset.
    Fit(FitArgs),
    /// Run a single episode and write its trace.
    Run(RunArgs),
    /// Run every (action rate, cell) combination and compare against the baseline.
    Sweep(SweepArgs),
    /// Recompute t-tests from a summary table.
    Stats(StatsArgs),
    /// Print the default experiment configuration.
    PrintConfig,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory log (`t,x0,...`).
    pub log: PathBuf,
    /// Control points per chunk (or in total with `--global`).
    #[arg(long)]
    pub n_ctrl: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Chunk length in seconds; the whole log is one chunk if omitted.
    #[arg(long)]
    pub chunk_duration: Option<f64>,
    /// Fit the whole log once and cut it into chunks instead of fitting each chunk.
    #[arg(long)]
    pub global: bool,
    #[arg(long, default_value_t = CUBIC)]
    pub degree: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the cell's reference mode.
    #[arg(long)]
    pub mode: Option<ReferenceMode>,
    #[arg(long)]
    pub f_action: Option<f64>,
    /// Cell to run; defaults to the first configured cell.
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the seed base.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Summary table with columns method, mean, var|sd, n and optionally group, alternative.
    pub summaries: PathBuf,
    #[arg(long, default_value = "baseline")]
    pub baseline: String,
    /// Use Welch's unequal-variance test instead of the pooled test.
    #[arg(long)]
    pub welch: bool,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args, stdout),
        Command::Run(args) => cmd_run(&args, stdout),
        Command::Sweep(args) => cmd_sweep(&args, stdout).map(|_| ()),
        Command::Stats(args) => cmd_stats(&args, stdout),
        Command::PrintConfig => {
            write!(stdout, "{}", ExperimentConfig::default().to_toml()).map_err(runtime)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let log = io::read_trajectory_log(&args.log).map_err(|e| CliError::Config(e.to_string()))?;
    let times = log.samples.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let windows = match args.chunk_duration {
        None => vec![(t0, t1)],
        Some(w) if w > 0.0 => {
            let mut out = Vec::new();
            let mut a = t0;
            while a < t1 {
                let b = (a + w).min(t1);
                out.push((a, b));
                a = b;
            }
            out
        }
        Some(w) => return Err(CliError::Config(format!("chunk duration must be positive, got {w}"))),
    };
    let chunks = if args.global {
        fit_windows(&log.samples, args.n_ctrl, args.degree, &windows).map_err(runtime)?
    } else {
        let mut chunks = Vec::with_capacity(windows.len());
        for (idx, window) in windows.iter().enumerate() {
            let mut fitted = fit_per_window(&log.samples, args.n_ctrl, args.degree, std::slice::from_ref(window))
                .map_err(|e| runtime(format!("chunk {idx} [{}, {}]: {e}", window.0, window.1)))?;
            chunks.append(&mut fitted);
        }
        chunks
    };
    io::write_spline_dataset(&chunks, &args.out).map_err(runtime)?;
    for (idx, (chunk, (a, b))) in chunks.iter().zip(&windows).enumerate() {
        writeln!(stdout, "chunk {idx} [{a}, {b}]: residual_rms = {:.6e}", chunk.fit_residual_rms).map_err(runtime)?;
    }
    Ok(())
}

fn trace_summary(trace: &EpisodeTrace) -> TraceSummary {
    TraceSummary {
        success: trace.success(),
        success_time: trace.success_time,
        rms_error: metrics::rms_tracking_error(trace, None).unwrap_or(0.0),
        peak_force: trace.peak_force(),
    }
}

fn write_trace_files(trace: &EpisodeTrace, stem: &Path) -> Result<TraceSummary, CliError> {
    let summary = trace_summary(trace);
    io::write_episode_trace(trace, &stem.with_extension("csv")).map_err(runtime)?;
    io::write_trace_summary(&summary, &stem.with_extension("json")).map_err(runtime)?;
    Ok(summary)
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let mut cell = match &args.cell {
        Some(name) => cfg
            .cells
            .iter()
            .find(|c| &c.name == name)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("no cell named '{name}'")))?,
        None => cfg.cells[0].clone(),
    };
    if let Some(mode) = args.mode {
        cell.mode = mode;
    }
    let seed = args.seed.unwrap_or(cfg.seed_base);
    let f_action = args.f_action.unwrap_or(cfg.f_action[0]);
    let episode = cfg.episode_for(&cell, f_action, seed);
    let plan = cfg.task.build(&cfg.scenario, seed).map_err(|e| CliError::Config(e.to_string()))?;
    episode.validate(plan.dims()).map_err(|e| CliError::Config(e.to_string()))?;
    let trace = run_episode(&plan, &episode, &cfg.scenario).map_err(runtime)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let stem = out.join(format!("{}_{}_seed{seed}", cell.name, group_label(f_action)));
    let summary = write_trace_files(&trace, &stem)?;
    writeln!(stdout, "{}", serde_json::to_string_pretty(&summary).map_err(runtime)?).map_err(runtime)
}

/// Aggregated results of one (action rate, cell) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub group: String,
    pub cell: CellConfig,
    pub episodes: usize,
    /// Success times in seed order.
    pub success_times: Vec<Option<f64>>,
    pub mean_rms_error: f64,
    pub mean_peak_force: f64,
    /// First episode error, if the cell was aborted.
    pub error: Option<String>,
}

impl CellResult {
    pub fn completion_times(&self) -> Vec<f64> {
        self.success_times.iter().flatten().copied().collect()
    }

    pub fn summary(&self) -> Option<SampleSummary> {
        if self.error.is_some() {
            return None;
        }
        SampleSummary::from_samples(&self.completion_times()).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<CellResult>,
    pub rows: Vec<ComparisonRow>,
}

/// Runs all episodes of the configuration in parallel.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: Option<&Path>, workers: usize) -> Result<SweepOutcome, CliError> {
    struct Job<'a> {
        f_action: f64,
        cell: &'a CellConfig,
        seed: u64,
    }
    let jobs: Vec<Job> = cfg
        .f_action
        .iter()
        .flat_map(|&f_action| {
            cfg.cells.iter().flat_map(move |cell| {
                (0..cfg.episodes as u64).map(move |i| Job {
                    f_action,
                    cell,
                    seed: cfg.seed_base + i,
                })
            })
        })
        .collect();

    let run_job = |job: &Job| -> Result<TraceSummary, String> {
        let plan = cfg.task.build(&cfg.scenario, job.seed).map_err(|e| e.to_string())?;
        let episode = cfg.episode_for(job.cell, job.f_action, job.seed);
        let trace = run_episode(&plan, &episode, &cfg.scenario).map_err(|e| format!("seed {}: {e}", job.seed))?;
        match out_dir {
            Some(dir) if cfg.save_traces => {
                let stem = dir
                    .join("traces")
                    .join(format!("{}_{}", group_label(job.f_action), job.cell.name))
                    .join(format!("seed_{}", job.seed));
                write_trace_files(&trace, &stem).map_err(|e| e.to_string())
            }
            _ => Ok(trace_summary(&trace)),
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(runtime)?;
    let results: Vec<Result<TraceSummary, String>> = pool.install(|| jobs.par_iter().map(run_job).collect());

    let per_cell = cfg.episodes.max(1);
    let mut cells = Vec::new();
    for (chunk_jobs, chunk_results) in jobs.chunks(per_cell).zip(results.chunks(per_cell)) {
        let first = &chunk_jobs[0];
        let error = chunk_results.iter().find_map(|r| r.as_ref().err().cloned());
        let ok: Vec<&TraceSummary> = chunk_results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let mean = |f: &dyn Fn(&TraceSummary) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64
            }
        };
        cells.push(CellResult {
            group: group_label(first.f_action),
            cell: first.cell.clone(),
            episodes: chunk_jobs.len(),
            success_times: if error.is_some() {
                Vec::new()
            } else {
                ok.iter().map(|s| s.success_time).collect()
            },
            mean_rms_error: mean(&|s| s.rms_error),
            mean_peak_force: mean(&|s| s.peak_force),
            error,
        });
    }
    if cfg.episodes == 0 {
        cells.clear();
    }

    let rows = comparison_rows(&cells, &cfg.baseline);
    Ok(SweepOutcome { cells, rows })
}

fn comparison_rows(cells: &[CellResult], baseline: &str) -> Vec<ComparisonRow> {
    cells
        .iter()
        .map(|c| {
            let times = c.completion_times();
            let n = times.len();
            let mean = (n >= 1).then(|| times.iter().sum::<f64>() / n as f64);
            let summary = c.summary();
            let is_base = c.cell.name.eq_ignore_ascii_case(baseline);
            let base = cells
                .iter()
                .find(|b| b.group == c.group && b.cell.name.eq_ignore_ascii_case(baseline))
                .and_then(CellResult::summary);
            let test = match (is_base, summary, base) {
                (false, Some(s), Some(b)) => Some(TestVariant::Pooled.run(&s, &b, cell_alternative(&c.cell))),
                _ => None,
            };
            ComparisonRow {
                group: c.group.clone(),
                method: c.cell.name.clone(),
                mean,
                variance: summary.map(|s| s.variance()),
                n,
                test,
            }
        })
        .collect()
}

/// Position-rolled-out cells trained on velocity-aware data are expected to
/// be slower than the baseline; every other cell faster.
fn cell_alternative(cell: &CellConfig) -> Alternative {
    match (cell.mode, cell.trained_with) {
        (ReferenceMode::PositionOnly, Some(t)) if t.has_velocity() => Alternative::Greater,
        _ => Alternative::Less,
    }
}

fn write_sweep_outputs(cfg: &ExperimentConfig, outcome: &SweepOutcome, dir: &Path) -> Result<(), CliError> {
    io::write_comparison_file(&outcome.rows, &dir.join("summary.csv")).map_err(runtime)?;

    let mut cells = String::from("group,method,mode,episodes,successes,mean_rms_error,mean_peak_force,status\n");
    for c in &outcome.cells {
        let status = c.error.as_deref().map_or("ok".to_string(), |e| format!("aborted: {}", e.replace(',', ";")));
        cells.push_str(&format!(
            "{},{},{},{},{},{:.6e},{:.6e},{}\n",
            c.group,
            c.cell.name,
            c.cell.mode,
            c.episodes,
            c.completion_times().len(),
            c.mean_rms_error,
            c.mean_peak_force,
            status
        ));
    }
    std::fs::write(dir.join("cells.csv"), cells).map_err(runtime)?;

    let steps = (cfg.episode.duration_max / cfg.curve_step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.curve_step).collect();
    let mut curves = String::from("group,method,t,fraction\n");
    for c in &outcome.cells {
        let times = if c.error.is_some() {
            vec![None; c.episodes]
        } else {
            c.success_times.clone()
        };
        for (t, frac) in grid.iter().zip(cumulative_success_from_times(&times, &grid)) {
            curves.push_str(&format!("{},{},{:.4},{:.6}\n", c.group, c.cell.name, t, frac));
        }
    }
    std::fs::write(dir.join("curves.csv"), curves).map_err(runtime)
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<SweepOutcome, CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed_base = seed;
    }
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    let outcome = run_sweep(&cfg, Some(&dir), args.workers.unwrap_or(cfg.workers))?;
    write_sweep_outputs(&cfg, &outcome, &dir)?;
    for c in outcome.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} {} aborted: {}", c.group, c.cell.name, c.error.as_deref().unwrap_or(""));
    }
    io::write_comparison_table(&outcome.rows, &mut *stdout).map_err(runtime)?;
    Ok(outcome)
}

pub fn cmd_stats(args: &StatsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rows = io::read_summary_table(&args.summaries)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let variant = if args.welch { TestVariant::Welch } else { TestVariant::Pooled };
    let table = compare_to_baseline(&rows, &args.baseline, variant).map_err(|e| CliError::Config(e.to_string()))?;
    match &args.out {
        Some(path) => io::write_comparison_file(&table, path).map_err(runtime),
        None => io::write_comparison_table(&table, &mut *stdout).map_err(runtime),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["fflab", "run", "--mode", "spline", "--f-action", "60", "--seed", "4"]).unwrap();
        match cli.command {
            Command::Run(args) => {
                assert_eq!(args.mode, Some(ReferenceMode::Spline));
                assert_eq!(args.f_action, Some(60.0));
                assert_eq!(args.seed, Some(4));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["fflab", "run", "--mode", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["fflab", "print-config"]).is_ok());
    }

    #[test]
    fn exit_codes_differ() {
        assert_ne!(CliError::Config(String::new()).exit_code(), CliError::Runtime(String::new()).exit_code());
    }

    #[test]
    fn ablation_is_tested_for_slowness() {
        let cfg = ExperimentConfig::default();
        let ablation = cfg.cells.iter().find(|c| c.name == "ablation").unwrap();
        assert_eq!(cell_alternative(ablation), Alternative::Greater);
        assert_eq!(cell_alternative(&cfg.cells[1]), Alternative::Less);
    }
}
