use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;
use uvc_core::{ResidualReport, UvcError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Invalid(String),

    /// Verification ran but the design failed one or more checks.
    #[error("{0}")]
    Rejected(String),

    #[error(transparent)]
    Core(#[from] UvcError),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Rejected(_) => 1,
            CliError::Core(UvcError::NoDesign { reason, .. }) if reason.contains("numerical_failure") => 3,
            CliError::Core(UvcError::NoDesign { .. }) => 1,
            CliError::Core(UvcError::IllConditioned(_) | UvcError::NumericalFailure(_)) => 3,
            CliError::Usage(_)
            | CliError::Io { .. }
            | CliError::Json { .. }
            | CliError::Csv(_)
            | CliError::Invalid(_)
            | CliError::Core(UvcError::InvalidArgument(_)) => 2,
        })
    }

    pub fn residual_report(&self) -> Option<&ResidualReport> {
        match self {
            CliError::Core(UvcError::NoDesign { report, .. }) => report.as_deref(),
            _ => None,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
