use thiserror::Error;

use crate::sdp::ResidualReport;

/// Errors raised by synthesis, analysis, and simulation routines.
#[derive(Debug, Error)]
pub enum UvcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no design: {reason}")]
    NoDesign {
        reason: String,
        report: Option<Box<ResidualReport>>,
    },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl UvcError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        UvcError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, UvcError>;
