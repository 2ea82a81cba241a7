//! `fgp`: run functionally-generated-portfolio experiments from a JSON config.
//!
//! Exit status is 0 on success, 1 on configuration or I/O errors and 2 when
//! a checked statistic misses its tolerance.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod report;

use commands::Invocation;
use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] fgp_core::Error),
    #[error("check failed: {0}")]
    Verdict(String),
}

impl LabError {
    fn exit_code(&self) -> u8 {
        match self {
            LabError::Verdict(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fgp", version, about = "Functionally generated portfolio laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides FGP_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate price paths and write them as CSV.
    Simulate(Common),
    /// Run generated portfolios and check the log-value decomposition.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Also run on a grid k times finer with the same noise.
        #[arg(long, value_name = "k")]
        refine: Option<usize>,
    },
    /// Evaluate the replicability PDE residual.
    ReplicateCheck(Common),
    /// Price a claim with the three-step homogenization procedure.
    Price(Common),
    /// Monte Carlo self-financing replication of a claim.
    Hedge(Common),
}

fn run(cli: Cli) -> Result<(), LabError> {
    let (common, refine) = match &cli.command {
        Command::Decompose { common, refine } => (common, *refine),
        Command::Simulate(c) | Command::ReplicateCheck(c) | Command::Price(c) | Command::Hedge(c) => (c, None),
    };
    let loaded = ExperimentConfig::load(&common.config)?;
    let inv = Invocation { loaded: &loaded, out: common.out.as_deref(), refine };
    match cli.command {
        Command::Simulate(_) => commands::simulate(&inv),
        Command::Decompose { .. } => commands::decompose(&inv),
        Command::ReplicateCheck(_) => commands::replicate_check(&inv),
        Command::Price(_) => commands::price(&inv),
        Command::Hedge(_) => commands::hedge(&inv),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fgp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
