use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("invalid learning rate {0}")]
    LearningRate(f64),

    #[error("forward cache does not match segment: {0}")]
    CacheMismatch(String),

    #[error("invalid split point: {0}")]
    InvalidSplit(String),

    #[error("threat-model violation: {0}")]
    ForeignShard(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("{path}: {message} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("invalid data request: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl Into<Vec<usize>>,
        actual: impl Into<Vec<usize>>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Stable short name for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::EmptyBatch(_) => "empty-batch",
            Error::LabelOutOfRange { .. } => "label-out-of-range",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::LearningRate(_) => "learning-rate",
            Error::CacheMismatch(_) => "cache-mismatch",
            Error::InvalidSplit(_) => "invalid-split",
            Error::ForeignShard(_) => "foreign-shard",
            Error::Aggregation(_) => "aggregation",
            Error::Format { .. } => "format",
            Error::Csv { .. } => "csv",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Metrics(_) => "metrics",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
