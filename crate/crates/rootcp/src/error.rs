use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The initialization cascade could not find an interior point whose
    /// typicalness clears the confidence level. Carries every probed
    /// `(candidate, typicalness)` pair for diagnosis.
    #[error("initialization failed after probing {} candidates", probes.len())]
    InitializationFailed { probes: Vec<(f64, f64)> },

    #[error("fit budget of {max_fits} model fits exhausted")]
    FitBudgetExhausted { max_fits: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
