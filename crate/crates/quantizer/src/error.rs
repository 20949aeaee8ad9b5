use larm_core::CoreError;
use larm_retrieval::RetrievalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("corpus has {rows} rows, fewer than the {k1} level-1 centroids")]
    CorpusTooSmall { rows: usize, k1: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("code {value} at level {level} is out of range for size {size}")]
    CodeOutOfRange { level: usize, value: u32, size: usize },
    #[error("no window for author {author} session {session} window {window}")]
    MissingWindow { author: u32, session: u32, window: u32 },
    #[error("malformed codebook: {0}")]
    Format(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Core(CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for QuantError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::CodeOutOfRange { level, value, size } => QuantError::CodeOutOfRange { level, value, size },
            CoreError::Io(e) => QuantError::Io(e),
            other => QuantError::Core(other),
        }
    }
}
