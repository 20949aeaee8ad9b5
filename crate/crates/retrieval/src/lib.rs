//! Two-tower retrieval.
//!
//! The item tower fuses an author's ID embedding with the real-time and
//! long-term multimodal window embeddings through a per-author sigmoid
//! gate; the user tower maps the user ID embedding (optionally plus
//! sum-pooled semantic codes of recently watched windows) into the same
//! space. Training uses an in-batch softmax over L2-normalized rows, and
//! evaluation retrieves exact top-K authors from a cached index.

mod config;
mod error;
mod index;
mod loss;
mod metrics;
mod model;
mod train;

pub use config::{HitRateDenominator, RetrievalConfig, Variant};
pub use error::RetrievalError;
pub use index::{build_index, retrieve_topk, AuthorIndex};
pub use loss::{inbatch_softmax_loss, inbatch_softmax_loss_with, InBatchLoss};
pub use metrics::{evaluate_hit_rate, hit_rate, HitRateReport};
pub use model::{GateStats, PairBatch, TwoTowerModel, TwoTowerParams, UserCodeParams};
pub use train::{build_pairs, train_retrieval, train_retrieval_observed, TrainReport, TrainingPair};

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;
