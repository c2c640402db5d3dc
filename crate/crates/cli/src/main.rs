//! `cerberus`: generate synthetic fleets, ingest cycling data, train, evaluate,
//! estimate single cycles and roll capacity trajectories forward.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 numeric or divergence.
//! Set `CERBERUS_LOG` (e.g. `info`) for progress output on stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cerberus", version, about = "Battery capacity estimation and prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic fleet: one cycling CSV per cell plus manifest.csv.
    Synth(SynthArgs),
    /// Coulomb-count a dataset and print per-cycle capacities as CSV.
    Ingest(IngestArgs),
    /// Train a model and write a checkpoint with its loss history.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Fused capacity of one cycle from a single cell file.
    Estimate(EstimateArgs),
    /// Roll a cell's capacity trajectory forward.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    cells: usize,
    #[arg(long, default_value_t = 300)]
    cycles: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relaxation noise in volts for every cell.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `key = value` settings; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `random` or `stratified`.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Shuffle from OS entropy instead of the seed.
    #[arg(long)]
    nondeterministic: bool,
    /// Loss history CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Subset {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Report file; standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Cycles to score. Defaults to the checkpoint's test side when it
    /// records a split, else every cycle.
    #[arg(long, value_enum)]
    subset: Option<Subset>,
    /// Directory for per-cell plot CSVs.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Cycling CSV holding one cell; earlier cycles form the history.
    #[arg(long)]
    cycles: PathBuf,
    /// Cycle to estimate; the last one when omitted.
    #[arg(long)]
    cycle_index: Option<u32>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Cycling CSV holding one cell.
    #[arg(long)]
    cycles: PathBuf,
    #[arg(long)]
    horizon: usize,
    /// Use only the first N cycles as history.
    #[arg(long)]
    from: Option<usize>,
}

/// Failure classes, one per exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<cerberus_core::Error> for Failure {
    fn from(e: cerberus_core::Error) -> Self {
        use cerberus_core::Error;
        match e {
            Error::Usage(_) => Failure::Usage(e.to_string()),
            _ if e.is_numeric() => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CERBERUS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Predict(a) => commands::predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
