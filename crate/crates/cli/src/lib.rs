//! The `gme` command line: synthesize, ingest, build graphs, train, evaluate
//! and predict.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gme_core::eval::Variant;
use gme_core::graph::PruningMode;
use gme_core::model::Ablation;

pub use commands::run;
pub use config::{EvalConfig, RunConfig};

/// Environment variable holding the default data directory.
pub const DATA_DIR_ENV: &str = "GME_DATA_DIR";

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_SCHEMA: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

/// Failures raised by the command layer itself.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Schema(String),
}

/// Maps an error chain to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use gme_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Validation(_) => EXIT_VALIDATION,
                CliError::Schema(_) => EXIT_SCHEMA,
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    EXIT_VALIDATION
                }
                E::Io { .. } => EXIT_INTERNAL,
                E::Invalid(_) | E::Shape(_) | E::Empty(_) => EXIT_VALIDATION,
                E::Schema(_) | E::Json(_) => EXIT_SCHEMA,
                E::CheckpointVersion { .. } | E::Checkpoint(_) => EXIT_CHECKPOINT,
                E::MissingGradients | E::TapeConsumed => EXIT_INTERNAL,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound {
                EXIT_VALIDATION
            } else {
                EXIT_INTERNAL
            };
        }
    }
    EXIT_INTERNAL
}

#[derive(Debug, Parser)]
#[command(
    name = "gme",
    version,
    about = "Early crowdfunding performance estimation with market graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market.
    Synth(SynthArgs),
    /// Validate a market and print a summary.
    Ingest(IngestArgs),
    /// Write the competition graph and propagation tree of every window.
    Build(BuildArgs),
    /// Train a model on the training split.
    Train(TrainArgs),
    /// Score a trained model, a grid of variants or external predictions on
    /// the test split.
    Eval(EvalArgs),
    /// Predict unlaunched projects with a trained model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding projects.jsonl and investments.jsonl.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Proceed with the valid records when some input lines are rejected.
    #[arg(long)]
    pub allow_rejects: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// History length in days (1 to 7).
    #[arg(long = "t-h")]
    pub t_h: Option<u32>,
    /// Competition pruning: unpruned, only-cate, only-jf or cate-jf.
    #[arg(long)]
    pub pruning: Option<PruningMode>,
    /// Model variant: full, gme-c, gme-h, no-tree or gme-h-no-tree.
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Seed for initialization and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden state size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Learning-rate decay factor per decay period.
    #[arg(long)]
    pub decay_rate: Option<f64>,
    /// Optimizer steps per decay period.
    #[arg(long)]
    pub decay_steps: Option<u64>,
    /// Weight of the target loss against the auxiliary loss.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Dropout keep probability.
    #[arg(long)]
    pub keep: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Named preset: synthetic-small, synthetic-full, competition-only or
    /// evolution-only. Without it the [synth] table of --config is used.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML run configuration whose [synth] table describes the market.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator seed, overriding the preset or configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = DATA_DIR_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// History length in days (1 to 7).
    #[arg(long = "t-h")]
    pub t_h: Option<u32>,
    /// Competition pruning: unpruned, only-cate, only-jf or cate-jf.
    #[arg(long)]
    pub pruning: Option<PruningMode>,
    /// Output directory for graphs.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Model output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Trained model directory to score.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Variants to train and score on the grid (comma separated):
    /// full, gme-c, gme-h, no-tree, gme-h-no-tree, mlp, lstm, constant-mean.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// History lengths of the grid (comma separated).
    #[arg(long = "grid-t-h", value_delimiter = ',')]
    pub grid_t_h: Vec<u32>,
    /// Pruning modes of the grid (comma separated).
    #[arg(long = "grid-pruning", value_delimiter = ',')]
    pub grid_pruning: Vec<PruningMode>,
    /// External prediction file (JSON lines with project_id and prediction).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Worker threads for the grid.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained model directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Projects to predict, as project JSON lines.
    #[arg(long)]
    pub targets: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
