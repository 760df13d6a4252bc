//! Command-line driver for the `zshash` toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<zshash::Error> for CliError {
    fn from(e: zshash::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "zshash", version, about = "Zero-shot hashing: train, adapt, encode and evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Dataset directory (features.csv, labels.csv, attributes.csv, split.txt)
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,

    /// Model directory to read
    #[arg(long, global = true, value_name = "DIR")]
    pub model: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Code length
    #[arg(long, global = true, value_name = "K")]
    pub bits: Option<usize>,

    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,

    /// INI-style `key = value` file; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Unit-norm features and zero-mean attributes on load
    #[arg(long, global = true)]
    pub normalize: bool,

    /// Skip domain adaptation in eval and the sweeps
    #[arg(long = "no-da", global = true)]
    pub no_da: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to --out
    Synth,
    /// Train on the seen classes of --data, write the model to --out
    Train,
    /// Adapt --model to the unseen images of --data, write it to --out
    Adapt,
    /// Write the codes of every image in --data to --out/codes.csv
    Encode,
    /// Retrieval metrics on unseen-class queries
    Eval,
    /// MAP and precision as the share of seen classes varies
    SweepSeenRatio,
    /// MAP and precision as the number of training images varies
    SweepTrainSize,
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        if self.data.is_some() {
            config.data = self.data.clone();
        }
        if self.model.is_some() {
            config.model = self.model.clone();
        }
        if self.out.is_some() {
            config.out = self.out.clone();
        }
        if self.bits.is_some() {
            config.bits = self.bits;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.normalize |= self.normalize;
        config.no_da |= self.no_da;
        config.validate()?;
        Ok(config)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.run_config().and_then(|config| commands::dispatch(cli.command, &config)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
