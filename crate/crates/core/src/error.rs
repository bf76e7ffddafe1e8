use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, field `{field}`: {message}")]
    Malformed {
        row: usize,
        field: String,
        message: String,
    },

    #[error("duplicate case_id `{0}`")]
    DuplicateCase(String),

    #[error("prior out of tolerance: components sum to {sum}")]
    PriorOutOfTolerance { sum: f64 },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("case `{0}` is missing from the embedding table")]
    MissingEmbedding(String),

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("no input supplied for fusion block {0}")]
    MissingBlock(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate labels: at least two distinct classes are required")]
    DegenerateLabels,

    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error(
        "insufficient class support for stratified folding: class {class} has {count} rows, {folds} folds requested"
    )]
    InsufficientSupport {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("unsupported artifact version {found} (supported: {supported})")]
    Version { found: u64, supported: u64 },

    #[error("artifact checksum failure: {0}")]
    Checksum(String),

    #[error("not a distribution: {0}")]
    NotADistribution(String),

    #[error("projection: {0}")]
    Projection(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("annotation failed after {attempts} attempts: {last}")]
    AnnotationExhausted { attempts: usize, last: String },

    #[error("http: {0}")]
    Http(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(row: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Malformed {
            row,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
