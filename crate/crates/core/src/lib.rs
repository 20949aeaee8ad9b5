//! Shared domain types for the live-streaming recommendation pipeline.
//!
//! Every other crate in the workspace builds on the types defined here:
//! dense [`EmbeddingVector`]s, [`InteractionEvent`] records with their six
//! task labels, three-level [`SemanticCode`]s, and the counter-based [`Rng`]
//! that makes every stage reproducible from a single seed.
//!
//! The on-disk formats shared between stages (embedding corpus and
//! interaction log) live in [`io`].

pub mod code;
pub mod embedding;
pub mod error;
pub mod event;
pub mod history;
pub mod io;
pub mod rng;

pub use code::SemanticCode;
pub use embedding::{validate_corpus, EmbeddingVector};
pub use error::CoreError;
pub use event::{InteractionEvent, Labels, Task, VALID_VIEW_SECONDS};
pub use history::{HistoryEntry, ViewHistory};
pub use rng::{rng_stream, Rng};

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
