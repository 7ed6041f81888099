//! Command-line entry point wiring the correction pipeline:
//! preprocess | synth | train | finetune | infer | eval | ablate.
//!
//! Exit codes: 0 success, 1 configuration error (the message names the
//! offending field), 2 data error, 3 numerical abort (non-finite loss).

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical abort: {m}"),
        }
    }
}

impl From<veli_core::model::TrainError> for CliError {
    fn from(e: veli_core::model::TrainError) -> Self {
        use veli_core::model::TrainError;
        match &e {
            TrainError::NonFiniteLoss { .. } | TrainError::Optimizer { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<veli_core::pipeline::DataError> for CliError {
    fn from(e: veli_core::pipeline::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<veli_core::model::ModelError> for CliError {
    fn from(e: veli_core::model::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<veli_core::model::CheckpointError> for CliError {
    fn from(e: veli_core::model::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<veli_core::synth::SynthError> for CliError {
    fn from(e: veli_core::synth::SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<veli_core::eval::EvalError> for CliError {
    fn from(e: veli_core::eval::EvalError) -> Self {
        use veli_core::eval::EvalError;
        match &e {
            EvalError::Train(t) => CliError::from(clone_train_kind(t, e.to_string())),
            EvalError::BetaYZero | EvalError::BadScale(_) | EvalError::NaCountOutOfRange { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn clone_train_kind(t: &veli_core::model::TrainError, msg: String) -> CliError {
    use veli_core::model::TrainError;
    match t {
        TrainError::NonFiniteLoss { .. } | TrainError::Optimizer { .. } => CliError::Numeric(msg),
        _ => CliError::Data(msg),
    }
}

#[derive(Parser)]
#[command(
    name = "veli",
    version,
    about = "Reference-free low-cost-sensor correction toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Flat TOML config file; CLI flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing); all outputs land here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Chatty progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Ingests raw per-device CSVs into one aligned location table.
    Preprocess(commands::PreprocessArgs),
    /// Generates a synthetic location from a base signal and noise preset.
    Synth(commands::SynthArgs),
    /// Trains a correction model on a location CSV.
    Train(commands::TrainArgs),
    /// Encoder-only fine-tuning of an existing checkpoint on new data.
    Finetune(commands::FinetuneArgs),
    /// Writes corrected estimates (and credible scales) for a location.
    Infer(commands::InferArgs),
    /// Computes the evaluation report against the reference column.
    Eval(commands::EvalArgs),
    /// Runs an ablation: na | subset | weights.
    Ablate(commands::AblateArgs),
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap's rendered help/version output goes to stdout with success.
        if e.use_stderr() {
            CliError::Config(e.to_string())
        } else {
            print!("{e}");
            std::process::exit(0);
        }
    })?;
    match cli.command {
        Command::Preprocess(args) => commands::preprocess(&cli.global, &args),
        Command::Synth(args) => commands::synth(&cli.global, &args),
        Command::Train(args) => commands::train(&cli.global, &args),
        Command::Finetune(args) => commands::finetune(&cli.global, &args),
        Command::Infer(args) => commands::infer(&cli.global, &args),
        Command::Eval(args) => commands::eval(&cli.global, &args),
        Command::Ablate(args) => commands::ablate(&cli.global, &args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
