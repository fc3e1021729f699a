use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("batch statistics need at least 2 samples, got {0}")]
    DegenerateBatch(usize),

    #[error("invalid bit width {0}, expected 2..=8")]
    InvalidBits(u32),

    #[error("malformed one-hot label in row {row}")]
    MalformedOneHot { row: usize },

    #[error("row {row} is not a probability distribution (sum {sum})")]
    OffSimplex { row: usize, sum: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {what} at {context}")]
    NonFinite { what: String, context: String },

    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn non_finite(what: impl Into<String>, context: impl Into<String>) -> Self {
        Error::NonFinite {
            what: what.into(),
            context: context.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidBits(_) | Error::InvalidTemperature(_) => 2,
            Error::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}
