//! Command-line front end: train, eval, predict, gradcheck, selftest.
//!
//! Exit codes: 0 success, 1 failed check (gradcheck or selftest),
//! 2 configuration error, 3 data error, 4 training failure.

mod commands;
mod config;
mod report;
mod selftest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::pipeline::PipelineError;

pub use config::{CliConfig, OutputFormat};
pub use report::{
    eval_report_json, eval_report_text, experiment_report_json, experiment_report_text,
};
pub use selftest::{run_all as run_selftest, SuiteResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training failure: {0}")]
    Training(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(msg) => CliError::Config(msg),
            PipelineError::Train(msg) => CliError::Training(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Multi-granularity Chinese NER: radical, character and word
/// embeddings feeding a BiGRU-CRF tagger.
#[derive(Debug, Parser)]
#[command(name = "mecner", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one or more models from a JSON configuration
    Train(TrainArgs),
    /// Evaluate a model bundle on a gold-tagged corpus
    Eval(EvalArgs),
    /// Tag raw sentences, one per input line
    Predict(PredictArgs),
    /// Finite-difference check of the full model at shrunk dims
    Gradcheck(GradcheckArgs),
    /// Run the built-in verification suites (no external data needed)
    Selftest,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Override the base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of runs: seeds seed, seed+1, ..., one bundle each
    #[arg(long)]
    pub runs: Option<usize>,
    /// Bundle output directory (base name for multi-run)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Override one config key, e.g. --set model.keep_prob=0.9
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model bundle directory
    #[arg(long)]
    pub model: PathBuf,
    /// Gold-tagged corpus file
    pub corpus: PathBuf,
    /// Word segmentation file (defaults to built-in max-match)
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Score the gold tags against themselves (plumbing sanity check)
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model bundle directory
    #[arg(long)]
    pub model: PathBuf,
    /// Input file, one sentence per line (stdin when omitted)
    pub input: Option<PathBuf>,
    /// Word segmentation file aligned with the input lines
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Multiplier on the shrunk dimensions
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
        Command::Selftest => commands::cmd_selftest(),
    }
}
