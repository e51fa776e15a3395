use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the restoration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("grayscale required: {0}")]
    GrayscaleRequired(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// A non-finite value showed up mid-run; the iteration index points at
    /// the first update that produced it.
    #[error("non-finite value detected at iteration {iteration}")]
    NonFinite { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
