//! The `boolcd` command line.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! run fails.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::descent::PolicyKind;

mod commands;
pub mod config;
pub mod manifest;

pub use config::Config;
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "boolcd", version, about = "Boolean readout training by coordinate descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for all randomness (falls back to the config, then BOOLCD_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an ensemble of readouts on a Mackey-Glass task.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Reservoir size.
        #[arg(long)]
        n: Option<usize>,
        /// Epoch budget per descent.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        minimizers: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Train on a task directory written by `gen-task`.
        #[arg(long)]
        task: Option<PathBuf>,
    },
    /// Sweep reservoir sizes and fit K against N.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<PolicyKind>>,
        #[arg(long)]
        minimizers: Option<usize>,
    },
    /// Contraction constants and checks on small exhaustive instances.
    Theory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Write a reservoir task (state matrices, targets, metadata).
    GenTask {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t_train: Option<usize>,
        #[arg(long)]
        t_test: Option<usize>,
        /// `csv` or `binary`.
        #[arg(long)]
        format: Option<String>,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("boolcd: {e}");
            e.exit_code()
        }
    }
}
