use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A structural or monotonicity invariant was broken. These indicate a
    /// bug rather than bad input.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
