use std::path::PathBuf;

use pcc_cbf::sim::RunError;
use pcc_cbf::Error;
use thiserror::Error as ThisError;

/// Failures of a command, each tied to a stable exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// Bad scenario file, bad time grid, unreadable or mismatched log.
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Inadmissible(String),

    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 1,
            Self::Config(_) => 2,
            Self::Inadmissible(_) => 3,
            Self::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Inadmissible { .. } => Self::Inadmissible(e.to_string()),
            Error::NonFinite(_) | Error::Factorization | Error::NoConvergence(_) => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Setup(inner) => inner.into(),
            aborted @ RunError::Aborted { .. } => Self::Numerical(aborted.to_string()),
        }
    }
}
