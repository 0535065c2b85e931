use std::path::PathBuf;

use crate::estimator::EstimationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unsupported squeezing order {0} (supported: {1})")]
    UnsupportedOrder(usize, &'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size too coarse: dt*|H| = {ratio:.4} exceeds {limit}")]
    InvalidStep { ratio: f64, limit: f64 },

    #[error("trace drift {drift:.3e} exceeds tolerance {tolerance:.1e}")]
    TraceDrift { drift: f64, tolerance: f64 },

    #[error("invalid time: t = {t} precedes t0 = {t0}")]
    InvalidTime { t: f64, t0: f64 },

    #[error("characteristic value out of range: |chi| = {0}")]
    InvalidChi(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("rank-deficient Fisher information (smallest eigenvalue {eigenvalue:.3e}); unidentifiable direction {direction:?}")]
    RankDeficient { eigenvalue: f64, direction: Vec<f64> },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        best: Box<EstimationReport>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
