//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit. Variants are grouped by how the CLI maps
/// them onto exit codes: usage/argument problems, data/format problems and
/// numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("patch window out of range: row {row}, col {col}, size {size} on {height}x{width} image")]
    OutOfRange {
        row: usize,
        col: usize,
        size: usize,
        height: usize,
        width: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
