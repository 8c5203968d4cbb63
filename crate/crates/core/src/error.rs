use thiserror::Error;

/// Errors raised by every fallible routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    /// The target level cannot be reached by the model (rarity or support violation).
    #[error("target a = {a} is infeasible: {reason}")]
    Infeasible { a: f64, reason: String },
    /// The requested approximation does not exist for the given regime.
    #[error("{what}: {reason}")]
    Regime { what: &'static str, reason: String },
    /// A non-lattice requirement was violated.
    #[error("{what} requires a non-lattice rate distribution, got {dist}")]
    Lattice { what: &'static str, dist: String },
    /// An iterative method failed to converge.
    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },
    /// A simulation would exceed the operation budget.
    #[error("simulation needs about {requested:.3e} draws, budget is {limit:.3e}")]
    Budget { requested: f64, limit: f64 },
    /// Textual input could not be parsed.
    #[error("cannot parse {what} from {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }

    pub(crate) fn infeasible(a: f64, reason: impl Into<String>) -> Self {
        Error::Infeasible {
            a,
            reason: reason.into(),
        }
    }

    pub(crate) fn regime(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Regime {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn no_convergence(what: &'static str, detail: impl Into<String>) -> Self {
        Error::NonConvergence {
            what,
            detail: detail.into(),
        }
    }

    /// True for failures of an iterative method, as opposed to bad input.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }

    /// Name of the offending parameter, if the error is tied to one.
    pub fn parameter(&self) -> Option<&'static str> {
        match self {
            Error::InvalidParameter { name, .. } => Some(name),
            Error::Infeasible { .. } => Some("a"),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::param(name, value, "must be positive and finite"))
    }
}
