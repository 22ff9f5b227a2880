use thiserror::Error;

/// Errors produced by the recovery laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e} exceeds {tolerance:.0e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix columns are not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("non-finite value encountered at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("monitor violation: {0}")]
    MonitorViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
