use thiserror::Error;

/// Errors raised by estimation, standard-error and design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("evaluation of density `{density}` failed: {reason}")]
    Evaluation { density: String, reason: String },

    #[error("support violation: {0}")]
    Support(String),

    #[error("degenerate estimator: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimization did not converge: {0}")]
    Optimization(String),
}

impl Error {
    /// Prefixes the message with `ctx`, keeping the kind.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Evaluation { density, reason } => Error::Evaluation { density, reason: format!("{ctx}: {reason}") },
            Error::Support(m) => Error::Support(format!("{ctx}: {m}")),
            Error::Degenerate(m) => Error::Degenerate(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Optimization(m) => Error::Optimization(format!("{ctx}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
