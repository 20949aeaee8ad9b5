use larm_nnkit::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("{kind} id {id} outside 0..{n}")]
    IdOutOfRange { kind: &'static str, id: usize, n: usize },
    #[error("code level {level} value {value} outside 0..{size}")]
    CodeOutOfRange { level: usize, value: u32, size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("embedding dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC needs at least one positive and one negative")]
    SingleClass,
    #[error("no user has both positive and negative samples")]
    NoEligibleUsers,
    #[error("training log is empty")]
    EmptyLog,
    #[error("training diverged: non-finite loss at epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}
