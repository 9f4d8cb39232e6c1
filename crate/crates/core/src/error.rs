use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::jet::JetError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error in {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("singular metric at t = {t0}: pivot {pivot:e}")]
    SingularMetric { t0: f64, pivot: f64 },
    #[error("metric signature {found:?} at t = {t0} does not match declared {expected:?}")]
    SignatureMismatch {
        t0: f64,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("dimension {0} is below 3; Schouten tensor undefined")]
    DimensionTooSmall(usize),
    #[error("degenerate lift: {0}")]
    DegenerateLift(String),
    #[error("degenerate curve: {0}")]
    Degenerate(String),
    #[error("vertex: {0}")]
    Vertex(String),
    #[error("isotropic step: {0}")]
    IsotropicStep(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("integration failure: {0}")]
    Integration(String),
}

impl Error {
    /// True for problems with the input itself rather than with a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::InvalidScene(_))
    }
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, source: ParseError) -> Self {
        Error::Parse {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
