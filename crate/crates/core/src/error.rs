use thiserror::Error;

/// Errors raised by the library.
///
/// Infinite divergences and infinite bounds are *values* (`f64::INFINITY`),
/// not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("alphabet size mismatch: expected {expected}, found {found}")]
    AlphabetMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible distortion level {epsilon}: minimum achievable is {min_achievable}")]
    Infeasible { epsilon: f64, min_achievable: f64 },

    #[error("negative radicand {value} in bound formula ({context})")]
    NegativeRadicand { value: f64, context: &'static str },

    #[error("enumeration cap exceeded: {states} states > cap {cap}")]
    EnumerationCap { states: u128, cap: u128 },

    #[error("distortion constraint violated: achieved {achieved} > epsilon {epsilon}")]
    DistortionViolated { achieved: f64, epsilon: f64 },

    #[error("trajectory left the quantizer range at step {step} (coordinate {coordinate}, value {value})")]
    TrajectoryOverflow { step: usize, coordinate: usize, value: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
