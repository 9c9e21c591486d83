//! Shared error type for every stage of the pipeline.
//!
//! Validation problems (bad input data, impossible configuration) and numerical
//! failures (non-convergence, non-finite intermediates) are kept as distinct
//! variants so callers can map them to different exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `row` is 1-based and counts the header.
    #[error("parse error at row {row}{}: {msg}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        row: usize,
        col: Option<usize>,
        msg: String,
    },

    /// Input data or configuration violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An iterative routine failed numerically (divergence, non-finite values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Failure tagged with the pipeline stage it occurred in.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the root cause is bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Invalid(_) => true,
            Error::Numerical(_) => false,
            Error::Stage { source, .. } => source.is_validation(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
