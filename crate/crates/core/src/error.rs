use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}: column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{path}: row {row}: non-positive price {value}")]
    NonPositivePrice { path: PathBuf, row: u64, value: f64 },

    #[error("{path}: row {row}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: PathBuf,
        row: u64,
        timestamp: String,
    },

    #[error("{what}: need at least {needed} observations, got {got}")]
    TooShort {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("timestamp intersection of the input series is empty")]
    EmptyIntersection,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix for {label} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { label: String, min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("no admissible threshold: {0}")]
    NoAdmissibleThreshold(String),

    #[error("date not covered by regime labels: {0}")]
    UncoveredDate(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
