//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the text pipeline, encoder, trainer and retrieval layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty token")]
    EmptyToken,

    #[error("invalid token {0:?}: expected lowercase letters and digits only")]
    InvalidToken(String),

    #[error("empty sentence")]
    EmptySentence,

    #[error("empty document")]
    EmptyDocument,

    #[error("context window must have odd length, got {0}")]
    BadWindowLength(usize),

    #[error("malformed vector file header {header:?}: expected \"count dim\"")]
    VectorHeader { header: String },

    #[error("row length {got} != dim {expected} at line {line}")]
    VectorRowLength {
        line: usize,
        got: usize,
        expected: usize,
    },

    #[error("non-numeric field {field:?} at line {line}")]
    VectorField { line: usize, field: String },

    #[error("vector file declares {declared} rows but contains {found}")]
    VectorCount { declared: usize, found: usize },

    #[error("{path}:{line}: {message}")]
    JsonLine {
        path: String,
        line: usize,
        message: String,
    },

    #[error("labels reference unknown doc_ids: {0}")]
    UnknownDocIds(String),

    #[error("question {0:?} has no documents")]
    EmptyQuestion(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("max_pool requires at least one window")]
    EmptyFeatureMatrix,

    #[error("degenerate semantic vector")]
    DegenerateVector,

    #[error("degenerate semantic vector for document {0:?}")]
    DegenerateDocument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint version {0} not supported")]
    CheckpointVersion(u32),

    #[error("need at least 2 questions to split, got {0}")]
    TooFewQuestions(usize),

    #[error("no training pairs: no question groups two or more documents")]
    NoTrainingPairs,

    #[error("step must be positive")]
    NonPositiveStep,

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("K must be at least 1")]
    ZeroK,

    #[error("index is empty")]
    EmptyIndex,

    #[error("code length {bits} exceeds semantic dimension {dim}")]
    CodeTooWide { bits: usize, dim: usize },

    #[error("code length {0} exceeds the supported maximum of 64 bits")]
    CodeTooLong(usize),

    #[error("probe radius {radius} exceeds code length {bits}")]
    RadiusTooLarge { radius: usize, bits: usize },

    #[error("model fingerprint {model} does not match index fingerprint {index}")]
    FingerprintMismatch { model: String, index: String },

    #[error("validation documents missing from index: {0}")]
    MissingFromIndex(String),

    #[error("vocab sizes too small for doc_length: need {needed_private} private and {needed_shared} shared words, have {private} and {shared}")]
    VocabTooSmall {
        needed_private: usize,
        needed_shared: usize,
        private: usize,
        shared: usize,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
