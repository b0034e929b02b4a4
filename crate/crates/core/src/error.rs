use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates the precondition named in the message.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Two inputs that must share a shape (truncation, mesh) do not.
    #[error("shape mismatch: {0}")]
    Mismatch(String),

    /// Non-finite input value.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The pressure field does not have exactly one interior flux zero.
    #[error("degenerate pressure: {0}")]
    DegeneratePressure(String),

    /// An explicit eigenvalue list cannot be extrapolated.
    #[error("cannot estimate trace exponent: {0}")]
    Extrapolation(String),

    /// The rate optimizer could not find a strictly feasible witness.
    #[error("no positive rate certified: {0}")]
    NoRate(String),

    /// A numerical contradiction that should be impossible for valid inputs.
    #[error("inconsistency: {0}")]
    Inconsistent(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg()))
    }
}
