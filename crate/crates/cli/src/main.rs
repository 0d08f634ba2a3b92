//! `prism`: generate or aggregate demand series, then train, evaluate, ablate
//! and inspect forecasters on them.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "prism",
    version,
    about = "Compositional forecasting of aggregated GPU demand"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    #[value(name = "32")]
    F32,
    #[value(name = "64")]
    F64,
}

impl PrecisionArg {
    pub fn bits(self) -> u32 {
        match self {
            PrecisionArg::F32 => 32,
            PrecisionArg::F64 => 64,
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Floating-point width for model computations.
    #[arg(long, value_enum, default_value = "32")]
    pub precision: PrecisionArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a multi-tenant demand series.
    Generate(GenerateArgs),
    /// Bucket a job trace CSV into a demand series.
    Aggregate(AggregateArgs),
    /// Train a model on a series file.
    Train(TrainArgs),
    /// Forecast the horizon following the end of each series.
    Predict(PredictArgs),
    /// Score a checkpoint on the test split against reference baselines.
    Evaluate(EvaluateArgs),
    /// Train every ablation variant over several seeds.
    Ablate(AblateArgs),
    /// Export mixing weights, primitive signatures and spectral statistics.
    Inspect(InspectArgs),
    /// Dynamic range and dominant periods of a series.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides the config's horizon_days.
    #[arg(long)]
    pub days: Option<u32>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Job trace CSV.
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, default_value_t = 3600)]
    pub bucket_seconds: i64,
    /// Keep only jobs of this priority (HP or Spot).
    #[arg(long)]
    pub priority: Option<String>,
    /// Keep only jobs of this organization.
    #[arg(long)]
    pub org: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Series CSV; optional with --resume, which reuses the original input.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Total epoch budget, overriding train.max_epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue the run stored in this directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint manifest, or a training directory (uses best.json).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    /// Expected forecast horizon; must match the checkpoint.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub series: PathBuf,
    /// Comma-separated seeds, overriding ablation.seeds (and --seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated variant labels, overriding ablation.variants.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub series: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Aggregate(a) => commands::aggregate(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Stats(a) => commands::stats(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
