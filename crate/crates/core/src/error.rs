use std::io;

use thiserror::Error;

/// Errors raised by the transform, thresholding, estimation and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length {len} is not a power of two")]
    InvalidLength { len: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("malformed coefficient layout: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "heteroscedastic variance estimation needs at least 2 replicates, got {n}; \
         use the MAD (homoscedastic) variance mode for single curves"
    )]
    InsufficientReplicates { n: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("line {line}: {message}")]
    Input { line: usize, message: String },

    #[error("study cell {cell}: {source}")]
    Cell { cell: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
