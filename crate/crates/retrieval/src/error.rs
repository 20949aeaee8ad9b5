use larm_nnkit::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unknown author {0}")]
    UnknownAuthor(u32),
    #[error("unknown user {0}")]
    UnknownUser(u32),
    #[error("embedding dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("no positive (clicked) events to train on")]
    NoPositives,
    #[error("no window for author {0}")]
    MissingWindow(u32),
    #[error("K = {k} is outside 1..={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("recall denominator needs a non-empty watched set")]
    EmptyP,
    #[error("retrieved list is empty")]
    EmptyR,
    #[error("semantic code {0} outside the code tables")]
    CodeOutOfRange(larm_core::SemanticCode),
    #[error("user-side codes requested but the model has no code tables")]
    NoCodeTables,
    #[error("training diverged: non-finite loss at epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}
