use thiserror::Error;

/// Errors produced by the exact solvers, samplers and validators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed user input: kernel rows, site sets, configurations, config files.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An operation's precondition does not hold on the given instance.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested quantity has no exact finite computation on this geometry.
    #[error("not computable: {0}")]
    NotComputable(String),

    /// A solve did not reach its residual target.
    #[error("numerical failure: {what} (residual {residual:e})")]
    Numerical { what: String, residual: f64 },

    /// Enumeration or truncation would exceed a hard size limit.
    #[error("size limit exceeded: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn not_computable(msg: impl Into<String>) -> Self {
        Error::NotComputable(msg.into())
    }

    /// True for errors that come from bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Precondition(_) | Error::TooLarge(_))
    }
}
