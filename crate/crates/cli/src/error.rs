use std::io;
use std::path::PathBuf;

use gna_core::GnaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: io::Error },

    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("config has no `{0}` section")]
    MissingSection(&'static str),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Gna(#[from] GnaError),

    #[error("cannot write output: {0}")]
    Write(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    /// 2 for anything wrong with the input, 3 for a broken invariant, 1 for I/O on the way out.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 3,
            CliError::Write(_) | CliError::Csv(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
