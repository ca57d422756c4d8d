use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("index ({row}, {col}) out of range for {n1}x{n2}")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n1: usize,
        n2: usize,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("outside validity region: {0}")]
    Domain(String),

    #[error("numeric failure: {message} (last iterate {last_value})")]
    NumericFailure { message: String, last_value: f64 },

    #[error(
        "insufficient samples: block size {q} below required {q_required:.1}; need m >= {minimal_m}"
    )]
    InsufficientSamples {
        q: usize,
        q_required: f64,
        minimal_m: u64,
    },

    #[error("ensemble contract violated in {bound}: {message}")]
    EnsembleContract { bound: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericFailure { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
