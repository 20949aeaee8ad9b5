use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch at index {index}: expected {expected}, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in vector at index {index}")]
    NonFiniteValue { index: usize },
    #[error("code component {level} = {value} out of range (size {size})")]
    CodeOutOfRange { level: usize, value: u32, size: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
