use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum GailError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{which} policy is not stabilizing (spectral radius {rho:.6})")]
    Unstable { which: String, rho: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("(A, B) does not appear stabilizable: {0}")]
    NotStabilizable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient coverage: {accepted} accepted samples, at least {required} required")]
    InsufficientCoverage { accepted: usize, required: usize },

    #[error("perturbation margin too small: {rejected} of {drawn} perturbed policies were destabilizing")]
    MarginTooSmall { rejected: usize, drawn: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GailError {
    pub(crate) fn unstable(which: impl Into<String>, rho: f64) -> Self {
        GailError::Unstable {
            which: which.into(),
            rho,
        }
    }
}

pub type Result<T> = std::result::Result<T, GailError>;
