use std::path::PathBuf;

use thiserror::Error;

use crate::handover::CopVector;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation failed at {cop}: {reason}")]
    Run { cop: CopVector, reason: String },

    #[error("dataset too small: {got} points, need at least {need}")]
    DatasetTooSmall { got: usize, need: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("singular design matrix (pivot {pivot} = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("scenario fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("malformed {what} in {path}: {reason}")]
    Malformed {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::FingerprintMismatch { .. } | Error::Malformed { .. } | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
