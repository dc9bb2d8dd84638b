use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the fitting and explanation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("non-numeric value `{value}` at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("classification target has a single class")]
    SingleClass,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    SingularKernel { jitter: f64 },

    #[error("singular design matrix in linear proxy fit")]
    SingularDesign,

    #[error("requested {requested} posterior draws but only {available} are available")]
    TooManyDraws { requested: usize, available: usize },

    #[error("too few samples ({samples}) for {folds} folds with min_leaf {min_leaf}")]
    TooFewSamples {
        samples: usize,
        folds: usize,
        min_leaf: usize,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// numerical or runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::SingularKernel { .. } | Error::SingularDesign)
    }
}
