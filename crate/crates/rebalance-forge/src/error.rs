use thiserror::Error;

/// Library-wide error type. Domain failures map to CLI exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A tabular input (manifest, predictions, feature CSV) failed to parse.
    /// `line` is the 1-based line number in the file, counting the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A JSON document failed to parse or violated its schema.
    #[error("invalid {what}: {message}")]
    InvalidDocument { what: &'static str, message: String },

    /// No records remained after applying a source filter.
    #[error("empty population")]
    EmptyPopulation,

    /// Every label already sits at the reference frequency.
    #[error("nothing to inject: dataset is perfectly balanced")]
    NothingToInject,

    /// SIIR outside [0, 1).
    #[error("ratio must be below one (got {0})")]
    RatioOutOfRange(f64),

    /// A configuration value violated its documented constraint.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Shape propagation failed at a specific layer.
    #[error("layer {layer_index} ({layer}): {message}")]
    Shape {
        layer_index: usize,
        layer: String,
        message: String,
    },

    /// Cross-validation planning failed.
    #[error("fold planning: {0}")]
    FoldPlanning(String),

    /// Metric computation over an unusable confusion matrix or report set.
    #[error("metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }
}
