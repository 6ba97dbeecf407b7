use thiserror::Error;

/// Failure modes shared by every analysis module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("unstable drift: spectral abscissa {0} is not positive, no invariant law")]
    UnstableDrift(f64),
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("simulation diverged at step {step} of trajectory {trajectory}")]
    Diverged { step: u64, trajectory: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    /// True for the numerical-failure family (including simulation blowup).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalFailure(_) | Error::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
