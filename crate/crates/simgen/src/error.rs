use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no windows to expose")]
    NoWindows,
    #[error("log is not sorted by timestamp at position {0}")]
    Unsorted(usize),
    #[error("split leaves the {0} side empty")]
    EmptySplit(&'static str),
}
