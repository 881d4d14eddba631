use std::io;
use std::path::Path;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or preconditions (bad k/p combinations, mismatched
    /// graphs, undersized inputs).
    #[error("usage error: {0}")]
    Usage(String),

    /// Metric domain violations, e.g. chi-square on non-positive components.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed file contents; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn format_in(path: &Path, offset: u64, msg: impl std::fmt::Display) -> Self {
        Error::Format {
            offset,
            msg: format!("{}: {}", path.display(), msg),
        }
    }

    /// Process exit code convention: 1 usage, 2 i/o, 3 format.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Domain(_) => 1,
            Error::Io(_) => 2,
            Error::Format { .. } => 3,
        }
    }
}
