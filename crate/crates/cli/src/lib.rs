//! Experiment driver for `fairauc`: single runs, noise sweeps, gamma
//! estimation and plot-data export.

pub mod config;
pub mod summary;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fairauc::dro::{estimate_gamma, read_similarity_file};
use fairauc::experiment::{noisy_splits, RunSeeds};
use fairauc::metrics::GroupAucReport;
use fairauc::scorer::MlpParams;
use fairauc::trainer::{check_invariants, evaluate, train_with, EpochRecord, Mode};
use serde::Serialize;

pub use config::{ConfigError, ExperimentConfig};
use summary::{FrontierPoint, RunRow};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(fairauc::Error),
    Io(std::io::Error),
    Csv(csv::Error),
    /// Some sweep runs failed; the rest were written.
    Partial { failed: usize, total: usize },
    Empty(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(fairauc::Error::Invariant(_)) => EXIT_INVARIANT,
            CliError::Partial { .. } => EXIT_PARTIAL,
            _ => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid config: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
            CliError::Csv(e) => write!(f, "csv: {e}"),
            CliError::Partial { failed, total } => write!(f, "{failed} of {total} runs failed"),
            CliError::Empty(what) => write!(f, "no input rows: {what}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<fairauc::Error> for CliError {
    fn from(e: fairauc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "fairauc", version, about = "AUC fairness training under noisy protected groups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and write checkpoint, history and test report.
    Train(RunArgs),
    /// Train every (noise level, mode, repetition) and write summary.csv.
    Sweep(SweepArgs),
    /// Estimate the gamma matrix from a similarity file.
    EstimateGamma(GammaArgs),
    /// Average sweep summaries into per (mode, noise) plot points.
    ExportFrontier(FrontierArgs),
    /// Score a checkpoint on the clean test split.
    Evaluate(EvalArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the first entry of `modes`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Overrides the first entry of `noise_levels`.
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Uniform radius replacing `train.gamma`.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Overrides `split.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    /// Loads the config and applies the flags, re-validating the result.
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(m) = self.mode {
            cfg.modes[0] = m;
        }
        if let Some(n) = self.noise_level {
            cfg.noise_levels[0] = n;
        }
        if let Some(g) = self.gamma {
            cfg.train.gamma = config::GammaSpec::Uniform(g);
        }
        if let Some(s) = self.seed {
            cfg.split.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.output_dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub opts: Overrides,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub opts: Overrides,
}

#[derive(Args, Debug)]
pub struct GammaArgs {
    /// CSV with columns id,label,group,sim_pos,sim_neg (groups 1-based).
    pub similarity: PathBuf,
    /// Number of groups.
    #[arg(short, long)]
    pub groups: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FrontierArgs {
    /// summary.csv files written by `sweep`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub opts: Overrides,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a.opts.load()?),
        Command::Sweep(a) => cmd_sweep(&a.opts.load()?),
        Command::EstimateGamma(a) => {
            let json = cmd_estimate_gamma(&a.similarity, a.groups)?;
            emit(a.out.as_deref(), &json)
        }
        Command::ExportFrontier(a) => {
            let points = cmd_export_frontier(&a.inputs)?;
            emit(a.out.as_deref(), &summary::frontier_csv(&points)?)
        }
        Command::Evaluate(a) => {
            let cfg = a.opts.load()?;
            let report = cmd_evaluate(&cfg, &a.checkpoint)?;
            emit(None, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// One line of `history.jsonl`.
#[derive(Serialize)]
struct HistoryLine<'a> {
    epoch: usize,
    auc: f64,
    violation: Option<f64>,
    min_max: Option<f64>,
    objective: f64,
    feasible: bool,
    lambdas: &'a [Vec<f64>],
}

fn history_jsonl(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for r in history {
        let line = HistoryLine {
            epoch: r.epoch,
            auc: r.auc,
            violation: r.violation,
            min_max: r.min_max,
            objective: r.objective,
            feasible: r.feasible,
            lambdas: &r.lambdas,
        };
        out.push_str(&serde_json::to_string(&line).expect("history serializes"));
        out.push('\n');
    }
    out
}

/// Trains one (noise, mode, seed) run and writes its artifacts to `dir`.
pub fn run_one(cfg: &ExperimentConfig, ds: &fairauc::dataset::Dataset, noise: f64, mode: Mode, seed: u64, dir: &Path) -> Result<GroupAucReport> {
    let splits = noisy_splits(ds, cfg.ratios(), noise, RunSeeds::from_seed(seed))?;
    let tc = cfg.train_config(mode, noise, seed, ds.num_groups)?;
    let out = train_with(&splits.train, &splits.val, &tc, |_, state| check_invariants(state, &tc))?;
    let (report, _) = evaluate(&out.best, &splits.test, splits.test.evaluation_groups())?;
    fs::create_dir_all(dir)?;
    out.best.save(dir.join("checkpoint.bin"))?;
    fs::write(dir.join("history.jsonl"), history_jsonl(&out.history))?;
    fs::write(dir.join("test_report.json"), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(report)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let ds = cfg.load_dataset()?;
    run_one(cfg, &ds, cfg.noise_levels[0], cfg.modes[0], cfg.split.seed, &cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

/// Runs the full grid sequentially. Failed runs are reported on stderr and
/// in `failures.txt`; the summary holds the successful ones.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let ds = cfg.load_dataset()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut total = 0;
    for &noise in &cfg.noise_levels {
        for &mode in &cfg.modes {
            for rep in 0..cfg.repetitions {
                total += 1;
                let seed = cfg.split.seed + rep as u64;
                let dir = cfg.output_dir.join("runs").join(format!("noise{noise}_{mode}_rep{rep}"));
                match run_one(cfg, &ds, noise, mode, seed, &dir) {
                    Ok(report) => rows.push(RunRow {
                        noise,
                        mode,
                        rep,
                        auc: report.overall_auc,
                        violation: report.violation,
                        min_max: report.min_max,
                    }),
                    Err(e) => {
                        eprintln!("run noise={noise} mode={mode} rep={rep} failed: {e}");
                        failures.push(format!("{noise},{mode},{rep},{e}"));
                    }
                }
            }
        }
    }
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("summary.csv"), summary::summary_csv(&rows)?)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml())?;
    if failures.is_empty() {
        Ok(())
    } else {
        fs::write(cfg.output_dir.join("failures.txt"), failures.join("\n") + "\n")?;
        Err(CliError::Partial { failed: failures.len(), total })
    }
}

/// Gamma matrix as JSON, undefined entries `null`.
pub fn cmd_estimate_gamma(path: &Path, groups: usize) -> Result<String> {
    let records = read_similarity_file(path)?;
    let gamma = estimate_gamma(&records, groups)?;
    Ok(serde_json::to_string(&gamma).expect("gamma serializes") + "\n")
}

pub fn cmd_export_frontier(inputs: &[PathBuf]) -> Result<Vec<FrontierPoint>> {
    let mut files = Vec::new();
    for p in inputs {
        files.push(summary::read_summary(p)?);
    }
    let points = summary::frontier(&files);
    if points.is_empty() {
        return Err(CliError::Empty(format!("{} file(s)", inputs.len())));
    }
    Ok(points)
}

/// Scores a checkpoint on the clean test split produced by `split.seed`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<GroupAucReport> {
    let ds = cfg.load_dataset()?;
    let splits = noisy_splits(&ds, cfg.ratios(), 0.0, RunSeeds::from_seed(cfg.split.seed))?;
    let params = MlpParams::load(checkpoint)?;
    let (report, _) = evaluate(&params, &splits.test, splits.test.evaluation_groups())?;
    Ok(report)
}
