use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("bias b = {0} outside |b| <= 1/2 - 1e-6")]
    BiasOutOfRange(f64),

    #[error("degenerate attack: acceptance normalization N = {0} is (numerically) zero")]
    DegenerateAttack(f64),

    #[error("unsupported: {0}")]
    Capability(String),

    /// The statistics say the protocol must abort (too much noise).
    #[error("abort: {0}")]
    Abort(String),

    #[error("estimate unavailable for {0:?}: no samples in the conditioning event")]
    PartialEstimate(Vec<&'static str>),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
