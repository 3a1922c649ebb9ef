use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("non-finite evaluation: {0}")]
    NonFinite(String),

    #[error("trajectory diverged at t = {time}: |x| exceeded the blow-up guard {guard:e}")]
    Diverged { time: f64, guard: f64 },

    #[error("all restarts diverged")]
    AllRestartsDiverged,

    #[error("enumeration size {size} exceeds the limit {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("missing Lipschitz metadata: {0}")]
    MissingLipschitz(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
