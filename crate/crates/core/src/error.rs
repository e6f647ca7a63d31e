use thiserror::Error;

use crate::coeff::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("circulant embedding has a negative eigenvalue {min_eigenvalue:e} below tolerance and fallback is disabled")]
    EmbeddingFailed { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("time {time} is not a node of the grid")]
    OffGrid { time: f64 },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("coefficient component {component}: {source}")]
    Eval {
        component: usize,
        #[source]
        source: EvalError,
    },

    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("point with |x| = {radius} lies outside the band [{lo}, {hi}]")]
    OutOfBand { radius: f64, lo: f64, hi: f64 },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
