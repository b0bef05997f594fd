//! Crate-wide error type, grouped so the command-line tool can map each
//! failure onto a stable process exit code.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments, unknown identifiers, malformed configuration.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Dimension or shape disagreement between tensors, datasets and policies.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Underlying filesystem failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file exists but its contents are not a valid artifact.
    /// `location` is a line number for text formats, a byte offset for binary.
    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    /// NaN/Inf detected where finite numbers are required (training aborts
    /// rather than continuing with poisoned state).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A dataset violates a precondition of the requested operation
    /// (empty after filtering, failed stitching audit, horizon mismatch...).
    #[error("dataset error: {0}")]
    Dataset(String),
}

/// Process exit codes used by the `rvs` binary.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    /// Serialization failures while writing an artifact are I/O failures
    /// from the caller's point of view.
    pub fn from_json(e: serde_json::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }

    /// Exit code the CLI should terminate with when surfacing this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::Dataset(_) => {
                exit_code::USAGE
            }
            Error::Io(_) | Error::Parse { .. } => exit_code::IO,
            Error::Numeric(_) => exit_code::NUMERIC,
        }
    }
}
