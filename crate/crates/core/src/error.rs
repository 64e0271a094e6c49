use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse `{source_text}`: {source}")]
    Parse {
        source_text: String,
        #[source]
        source: ParseError,
    },
    #[error("evaluating {what} at {point:?}: {source}")]
    Eval {
        what: String,
        point: Vec<f64>,
        #[source]
        source: EvalError,
    },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("metric is singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("metric is not pure with respect to phi at {point:?} (asymmetry {asymmetry:e})")]
    PurityViolation { point: Vec<f64>, asymmetry: f64 },
    #[error("finite-difference step {step:e} underflows at coordinate {coordinate}")]
    StepUnderflow { step: f64, coordinate: f64 },
    #[error("{what}: residual {residual:e} exceeds tolerance {tolerance:e}")]
    Constraint { what: String, residual: f64, tolerance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{got} samples are too few for differencing (need {need})")]
    TooFewSamples { got: usize, need: usize },
    #[error("vertical curve: the projected base curve is (nearly) stationary, base speed {speed:e} at t = {t}, so its Frenet frame is undefined")]
    VerticalCurve { speed: f64, t: f64 },
    #[error("metric restricted to the jet span is not positive definite at t = {t}")]
    Signature { t: f64 },
    #[error("structure is not parallel: |nabla phi| = {residual:e}")]
    NonParallelStructure { residual: f64 },
    #[error("unknown catalog entry `{0}`")]
    UnknownEntry(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
