use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("absolute continuity violated at index {index}: p = {p}, q = 0")]
    AbsoluteContinuityViolation { index: usize, p: f64 },

    #[error("non-finite input at index {index}")]
    NonFiniteInput { index: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("observation {observation} has zero probability under the prior")]
    ImpossibleObservation { observation: usize },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("policy space too large: {size} policies (cap 100000)")]
    PolicySpaceTooLarge { size: u128 },

    #[error("trajectory space too large: {size} outcome sequences (cap 100000)")]
    TrajectorySpaceTooLarge { size: u128 },

    #[error("policy evaluations mix functionals {first} and {other}")]
    MixedFunctionals { first: String, other: String },

    #[error("parse error{}: {message}", location(*.line, .field.as_deref()))]
    Parse {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },

    #[error("model failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("io error: {0}")]
    Io(String),
}

fn location(line: Option<usize>, field: Option<&str>) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!(" at line {l}, field `{f}`"),
        (Some(l), None) => format!(" at line {l}"),
        (None, Some(f)) => format!(" in field `{f}`"),
        (None, None) => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
