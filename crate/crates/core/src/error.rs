use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("label mismatch: expected {expected:?}, got {found:?}")]
    LabelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("block structure mismatch: {0}")]
    BlockMismatch(String),

    #[error("unknown axis label `{0}`")]
    UnknownLabel(String),

    #[error("index {index} out of range for axis `{label}` of extent {extent}")]
    IndexOutOfRange {
        label: String,
        index: usize,
        extent: usize,
    },

    #[error("division by zero in {count} element(s)")]
    DivisionByZero { count: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation `{operation}` is not supported by {what}")]
    Unsupported {
        operation: &'static str,
        what: String,
    },

    #[error("norm estimate did not converge after {iterations} iterations (best estimate {estimate})")]
    NormNotConverged { iterations: usize, estimate: f64 },

    #[error("step-size condition violated: {0}")]
    StepSize(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn unsupported(operation: &'static str, what: impl Into<String>) -> Self {
        Error::Unsupported {
            operation,
            what: what.into(),
        }
    }
}
