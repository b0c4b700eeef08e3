use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use fadenet::datagen::DataError;
use fadenet::metrics::MetricError;
use fadenet::models::ModelError;
use fadenet::nn::NnError;

/// Fading-channel surrogates: generate channel datasets, train FNN and cGAN
/// models, evaluate them and select checkpoints.
#[derive(Parser, Debug)]
#[command(name = "fadenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; may name a `preset`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base preset (see `fadenet presets`).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Dotted field override, e.g. `fnn.epochs=50`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write train/validation/test datasets and generation statistics.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the configured model and write checkpoints and a loss log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.bin and val.bin (default: the output directory).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score checkpoints (ScaledPE and overlapped area) and compare them.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate. Repeatable.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Also score a fresh genuine draw against the genuine reference.
        #[arg(long)]
        self_check: bool,
    },
    /// Rank every checkpoint in a directory by ScaledPE and pick the best.
    Select {
        #[command(flatten)]
        common: Common,
        /// Directory of .ckpt files.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// List the built-in presets.
    Presets,
    /// Print the resolved configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let msg = e.to_string();
        match e {
            DataError::Invalid(_) => Self::Config(msg),
            DataError::Unscalable { .. } | DataError::Channel(_) => Self::Numeric(msg),
            _ => Self::Data(msg),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::Numeric(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::Config(_) => Self::Config(msg),
            ModelError::Data(d) => d.into(),
            ModelError::Metric(m) => m.into(),
            ModelError::NonFinite { .. } | ModelError::Nn(NnError::NonFiniteGradient { .. }) => Self::Numeric(msg),
            ModelError::Nn(_) => Self::Other(msg),
            ModelError::Io(_) => Self::Other(msg),
            ModelError::Version { .. }
            | ModelError::Checksum
            | ModelError::Truncated
            | ModelError::Format(_)
            | ModelError::Fingerprint { .. } => Self::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Other(e.to_string())
    }
}

fn resolve(c: &Common) -> Result<config::RunConfig, CliError> {
    config::resolve(&config::ConfigSources {
        preset: c.preset.as_deref(),
        file: c.config.as_deref(),
        seed: c.seed,
        out: c.out.as_deref(),
        overrides: &c.overrides,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common } => commands::generate(&resolve(&common)?),
        Command::Train { common, data, resume } => {
            let cfg = resolve(&common)?;
            let data = data.unwrap_or_else(|| cfg.out.clone());
            commands::train(&cfg, &data, resume.as_deref())
        }
        Command::Evaluate {
            common,
            checkpoints,
            self_check,
        } => commands::evaluate(&resolve(&common)?, &checkpoints, self_check),
        Command::Select { common, checkpoints } => commands::select(&resolve(&common)?, &checkpoints),
        Command::Presets => {
            for p in config::PRESETS {
                println!("{p}");
            }
            Ok(())
        }
        Command::ShowConfig { common } => {
            print!("{}", resolve(&common)?.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fadenet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
