use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward called without a cached forward pass")]
    NoForwardCache,

    #[error("scaler used before fit")]
    ScalerNotFitted,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("intercept calibration failed: {0}")]
    Calibration(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("design matrix is rank deficient (column {0})")]
    RankDeficient(usize),

    #[error("unknown demand family `{0}`")]
    UnknownFamily(String),

    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),

    #[error("malformed data: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Calibration(_) | Error::Fit(_) | Error::RankDeficient(_)
        )
    }
}
