use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants split into two families that the CLI maps onto exit codes:
/// input/contract problems (`Validation`, `Config`, ...) and I/O failures.
#[derive(Debug, Error)]
pub enum GazeError {
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("index {index} out of range for {taxonomy} (size {size})")]
    LabelIndex {
        index: usize,
        taxonomy: &'static str,
        size: usize,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value in input at position {0}")]
    NonFinite(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl GazeError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        GazeError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the filesystem or a transport rather than
    /// by the content of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            GazeError::Io(_) => true,
            GazeError::Json(e) => e.is_io(),
            GazeError::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, GazeError>;
