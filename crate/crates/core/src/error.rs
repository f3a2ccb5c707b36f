use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised by the depth engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (non-positive focal, ray behind the camera).
    #[error("domain error: {0}")]
    Domain(String),
    /// Not enough usable data to define the quantity (empty masks, all patches skipped).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Caller passed mismatched or meaningless arguments.
    #[error("usage error: {0}")]
    Usage(String),
    /// A file could not be decoded.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    /// A structured text file has a bad or missing field.
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("png: {0}")]
    Png(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }

    /// Wraps an OS error with the path it concerns.
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn field(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
