use std::path::PathBuf;

use thiserror::Error;

/// Errors of the command-line layer. Each maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed input: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("checkpoint {path} was written for a different configuration")]
    StaleCheckpoint { path: PathBuf },
    #[error(transparent)]
    Compute(#[from] henonlab_core::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::StaleCheckpoint { .. } | CliError::Compute(_) | CliError::Pool(_) => exit::ERROR,
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const DEFINITE: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const UNRESOLVED: i32 = 2;
    pub const USAGE: i32 = 64;
    pub const IO: i32 = 74;
}

pub type CliResult<T> = Result<T, CliError>;
