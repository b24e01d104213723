use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file (missing column, bad header, truncated model...).
    #[error("format error: {0}")]
    Format(String),

    /// A single bad data row; `row` is 1-based and counts data rows only.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("empty distribution: no token has an embedding")]
    EmptyDistribution,

    /// Failure while training or running a named model.
    #[error("model {model}: {message}")]
    Model { model: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config/validation, 3 data format, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Format(_)
            | Error::Row { .. }
            | Error::Integrity(_)
            | Error::Version { .. }
            | Error::Io { .. } => 3,
            Error::Diverged { .. } | Error::EmptyDistribution | Error::Model { .. } => 4,
        }
    }
}
