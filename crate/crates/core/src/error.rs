use thiserror::Error;

/// Errors surfaced by the library. Every variant corresponds to a rejected
/// precondition; none of them is recoverable by retrying the same call.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("covariance factorization failed after jitter {jitter:.1e}: kernel is not positive semidefinite on this grid")]
    Factorization { jitter: f64 },

    #[error("cluster is not isolated from the rest of the spectrum (separation {0:.3e})")]
    ClusterNotIsolated(f64),

    #[error("degenerate normalization ({0:.3e}) while completing frame; pick another reference basis")]
    DegenerateCompletion(f64),

    #[error("vanishing inner product in column {column} while fixing phases")]
    VanishingPhase { column: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
