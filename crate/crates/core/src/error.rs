use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("grid of {width}x{height} nodes is too small (need at least {min} per side)")]
    GridTooSmall { width: usize, height: usize, min: usize },

    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },

    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("step index {k} outside 0..={steps}")]
    StepOutOfRange { k: usize, steps: usize },

    #[error("non-finite energy during {0}")]
    NonFiniteEnergy(&'static str),

    #[error("conjugate gradient stopped after {iterations} iterations at relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("search space of {size} candidates exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("de Casteljau level {level}, index {index}, step {step}: {source}")]
    Bezier {
        level: usize,
        index: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}
