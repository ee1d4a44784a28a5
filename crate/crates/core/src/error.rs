use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("stationary distribution solve failed: {0}")]
    Stationary(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("inconsistent moments: no root in the parameter domain (best residual {residual:.3e})")]
    InconsistentMoments { residual: f64 },

    #[error("quadrature did not reach relative tolerance {tolerance:e} on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64, tolerance: f64 },

    #[error("sample budget exceeded: cell needs {required:.3e} symbol draws, budget is {budget:.3e}")]
    Budget { required: f64, budget: f64 },

    #[error("enumeration cap exceeded: n = {n} > cap {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed input in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
