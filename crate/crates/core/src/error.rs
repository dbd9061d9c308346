use thiserror::Error;

use crate::model::TolledClass;

/// Errors raised by the solver and design routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model parameter is outside its admissible range.
    #[error("invalid {name}: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A lane-1 flow violates its feasibility bound.
    #[error("infeasible {class} lane-1 flow {value}: {bound}")]
    Infeasible {
        class: TolledClass,
        value: f64,
        bound: String,
    },

    /// An operation was called outside of the regime it is defined for.
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite_nonneg(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        });
    }
    if value < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be nonnegative",
        });
    }
    Ok(())
}
