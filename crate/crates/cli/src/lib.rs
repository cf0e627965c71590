//! `gnasim`: analyze, sweep, verify, predict, and render GNA configurations.
//!
//! All commands read one JSON config (`--config PATH`, or standard input)
//! and write a single document to `--out` or standard output. Exit status is
//! 0 on success, 2 for invalid input, 3 when an invariant check fails.

pub mod commands;
pub mod config;
pub mod error;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Output;
use crate::config::{Format, RunConfig};
use crate::error::{CliError, Result};
use crate::verify::{Fault, VerifyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "gnasim",
    version,
    about = "Generalized neighborhood attention tile simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config file; `-` or absent reads standard input.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Output file instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Randomized configurations per verification suite.
    #[arg(long, global = true, default_value_t = 32)]
    pub trials: usize,

    /// Sweep worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration.
    Analyze,
    /// Simulate every stride up to the window and keep the ones that pay off.
    Sweep,
    /// Run the randomized oracle suites.
    Verify {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// End-to-end speedups for given operation speedups or a sweep.
    Predict,
    /// Draw the attention mask.
    Render,
}

impl Command {
    fn default_format(&self) -> Format {
        match self {
            Command::Render => Format::Ascii,
            _ => Format::Json,
        }
    }
}

/// Runs `cli` against an already loaded config.
pub fn execute(cli: &Cli, config: &RunConfig) -> Result<Output> {
    let format = cli
        .format
        .or(config.output.format)
        .unwrap_or_else(|| cli.command.default_format());
    match &cli.command {
        Command::Analyze => commands::analyze(config, format),
        Command::Sweep => commands::sweep(config, format, cli.jobs),
        Command::Verify { inject_fault } => commands::verify(
            config,
            format,
            &VerifyOptions {
                seed: cli.seed,
                trials: cli.trials,
                fault: *inject_fault,
            },
        ),
        Command::Predict => commands::predict(config, format, cli.jobs),
        Command::Render => commands::render(config, format),
    }
}

/// Loads the config, runs the command, and writes its output.
pub fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let output = execute(cli, &config)?;
    match &cli.out {
        Some(path) => std::fs::write(path, &output.bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&output.bytes)?;
            stdout.flush()?;
        }
    }
    match output.failure {
        Some(msg) => Err(CliError::Invariant(msg)),
        None => Ok(()),
    }
}
