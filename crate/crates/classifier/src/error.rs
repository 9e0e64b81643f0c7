use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("expected {expected} token ids, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("corpus must contain both conceptual and coding questions")]
    DegenerateCorpus,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("question text is empty")]
    EmptyText,
    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("model file: {0}")]
    VersionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
