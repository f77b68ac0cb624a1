use thiserror::Error;

/// Errors produced by estimators, optimizers and the benchmark harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The evaluation budget ran out. Callers treat this as a termination
    /// signal, not a failure. `pairs_used` reports how many complete sample
    /// pairs were drawn before the budget ran out, where that is meaningful.
    #[error("evaluation budget exhausted after {pairs_used} sample pairs")]
    BudgetExhausted { pairs_used: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The gradient estimate has (numerically) zero norm, so the norm
    /// condition cannot bound the batch size.
    #[error("degenerate gradient estimate (norm {0:e})")]
    DegenerateGradient(f64),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
