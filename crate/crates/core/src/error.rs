use thiserror::Error;

/// Errors raised by the identification library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("degenerate Gram matrix (min pivot {min_pivot:e})")]
    DegenerateGram { min_pivot: f64 },

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("trajectory diverged at step {step} (state norm {norm:e})")]
    Divergence { step: usize, norm: f64 },

    #[error("LP solve failed: {0}")]
    Lp(String),

    #[error("row {row}: {source}")]
    Row { row: usize, source: Box<Error> },

    #[error("net too large: covering bound {bound:e} exceeds budget {budget:e}")]
    NetTooLarge { bound: f64, budget: f64 },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
