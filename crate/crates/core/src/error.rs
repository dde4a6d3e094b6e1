use thiserror::Error;

/// Errors raised by the imaging pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A dimension or length is out of the supported range.
    #[error("size error: {0}")]
    Size(String),

    /// A parameter lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in shape do not.
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// Both CNR regions have zero variance; the ratio is undefined.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// The knife-edge estimator could not find a usable edge.
    #[error("no valid edge: {0}")]
    NoEdge(String),

    /// A serialized measurement series could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
