use thiserror::Error;

/// Errors raised by the rate calculator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violated a documented invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A covariance matrix failed a structural check (symmetry, definiteness, physicality).
    #[error("covariance matrix rejected: {0}")]
    Covariance(String),

    /// No admissible attack or operating point exists for the given inputs.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A sweep element failed; carries the element index.
    #[error("sweep element {index}: {source}")]
    Sweep {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_index(self, index: usize) -> Self {
        Error::Sweep {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}
