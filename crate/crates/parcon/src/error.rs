//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonfiniteValue(String),

    #[error("invalid partition count: L={l} exceeds n={n}")]
    InvalidPartitionCount { l: usize, n: usize },

    #[error("bounds do not cover data: value {value} outside [{lo}, {hi})")]
    BoundsDoNotCover { value: f64, lo: f64, hi: f64 },

    #[error("part {part} is empty")]
    EmptyPart { part: usize },

    #[error("index {index} out of range for n={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("combiner not viable: {0}")]
    NonViableCombiner(String),

    #[error("histogram bin edges differ between parts")]
    BinMismatch,

    #[error("singular Hessian in Newton step (separation or collinearity)")]
    SingularHessian,

    #[error("degenerate variance: {0} point(s) cannot identify a Gaussian")]
    DegenerateVariance(usize),

    #[error("no viable candidate: all {0} candidates failed evaluation")]
    NoViableCandidate(usize),

    #[error("invalid k: {0} (must be at least 1)")]
    InvalidK(usize),

    #[error("label missing: {0}")]
    LabelMissing(String),

    #[error("invalid label {value} at point {index} (labels must be 0 or 1)")]
    InvalidLabel { index: usize, value: f64 },

    #[error("insufficient memory: {0}")]
    InsufficientMemory(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dataset too large for oracle: n={n} exceeds {max}")]
    TooLargeForOracle { n: usize, max: usize },

    #[error("invalid solution spec: {0}")]
    InvalidSpec(String),

    #[error("config error at {key}: {message}")]
    Config { key: String, message: String },

    /// Wraps an inner error with run context such as `repetition 2, part 5`.
    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn annotate(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
