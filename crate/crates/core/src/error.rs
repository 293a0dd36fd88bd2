use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bad IDX magic 0x{observed:08x} (expected 0x{expected:08x})")]
    Format { observed: u32, expected: u32 },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("truncated data: {0}")]
    Length(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at step {step} (loss {loss})")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("cannot draw {requested} distinct masks at Hamming distance {k}: only {available} exist")]
    Exhausted {
        requested: usize,
        k: usize,
        available: u128,
    },

    #[error("duplicate mask at nodes {first} and {second}")]
    DuplicateNode { first: usize, second: usize },

    #[error("nodes {0} and {1} are not connected")]
    Disconnected(usize, usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown experiment `{given}`; valid ids: {valid}")]
    UnknownExperiment { given: String, valid: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
