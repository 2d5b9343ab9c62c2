//! `eqshapelet`: run the detection pipeline stage by stage.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, invalid
//! configuration) and 2 for data errors (missing or malformed inputs).

mod commands;
mod manifest;
mod settings;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "eqshapelet", version, about = "Shapelet-based earthquake detection pipeline")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Stage configuration (TOML), or a run manifest to replay.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set forest.n_trees=200`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    /// Also write plot-ready CSV data (detection histograms).
    #[arg(long, global = true)]
    emit_plot_data: bool,

    /// Sample rate for CSV waveforms without a header.
    #[arg(long, global = true, value_name = "HZ")]
    sample_rate_hz: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic record and/or labeled learning set.
    Synth(SynthArgs),
    /// Band-pass, decimate and window raw waveforms.
    Preprocess(PreprocessArgs),
    /// Discover shapelets from a labeled training directory.
    Discover(DiscoverArgs),
    /// Accuracy and runtime across information-gain thresholds.
    Sweep(SweepArgs),
    /// Fit a random forest on shapelet-transformed windows.
    Train(TrainArgs),
    /// Classify windows and match detections against a catalog.
    Detect(DetectArgs),
    /// Window-level accuracy, precision and recall on labeled data.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Continuous record to write (`.bin`, or `.csv`).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Injected events of the record as CSV.
    #[arg(long, value_name = "FILE", requires = "out")]
    truth: Option<PathBuf>,
    /// Injected events of the record as a catalog CSV.
    #[arg(long, value_name = "FILE", requires = "out")]
    catalog: Option<PathBuf>,
    /// Also write a labeled learning set into this directory.
    #[arg(long, value_name = "DIR")]
    learning_set: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    events: Option<usize>,
    #[arg(long, value_name = "N")]
    others: Option<usize>,
    /// Learning-set window length (default: preprocess.window_seconds).
    #[arg(long, value_name = "SECONDS")]
    window_seconds: Option<f64>,
    #[arg(long)]
    duration_seconds: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// A waveform file, a directory of segments, or a labeled directory.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Split a labeled input into `train/` and `test/` with this fraction.
    #[arg(long, value_name = "F")]
    train_fraction: Option<f64>,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    #[arg(long, value_name = "DIR")]
    train: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_name = "DIR")]
    train: PathBuf,
    #[arg(long, value_name = "DIR")]
    test: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Comma-separated thresholds (default 0.05, 0.10, …, 0.50).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    thresholds: Option<Vec<f64>>,
    /// Forest seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    shapelets: PathBuf,
    #[arg(long, value_name = "DIR")]
    train: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Forest seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Preprocessed windows (file or directory).
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    /// Ground-truth injections; enables false-positive accounting.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Detections as JSON lines.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    #[arg(long, value_name = "SECONDS")]
    tolerance_seconds: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "DIR")]
    test: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// A mistake in how the tool was invoked.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|source| eqshapelet::Error::Io { path: path.to_owned(), source }.into())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| eqshapelet::Error::Io { path: parent.to_owned(), source })?;
    }
    std::fs::write(path, text).map_err(|source| eqshapelet::Error::Io { path: path.to_owned(), source }.into())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<eqshapelet::Error>() {
            return if e.is_usage() { 1 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let threads = cli.threads;
    match eqshapelet::par::with_threads(threads, || commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
