use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("conditioning on an event of zero probability (survival mass vanished at step {step})")]
    DegenerateConditioning { step: usize },

    #[error("absorbing state at {point:?}: no transformed move stays in the chamber")]
    AbsorbingState { point: Vec<f64> },

    #[error("transform value {value} is not positive at {point:?}")]
    NonPositiveTransform { point: Vec<f64>, value: f64 },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
