//! Multi-task ranking.
//!
//! Each exposure is scored from the author and user ID embeddings, a cross
//! feature of the two, and a target-attention summary of the user's recent
//! `(author, semantic code)` views. A multi-gate mixture of experts feeds
//! one sigmoid head per task, trained with summed binary cross-entropy and
//! evaluated with pooled AUC and per-user GAUC.

mod config;
mod error;
mod metrics;
mod model;
mod train;

pub use config::RankingConfig;
pub use error::RankingError;
pub use metrics::{auc, gauc};
pub use model::{
    code_attention, cross_feature, ranking_loss, tuple_embed, HistorySequence, RankingBatch, RankingModel, RankingParams,
};
pub use train::{build_examples, evaluate_ranking, train_ranking, RankingExample, RankingReport, TaskMetrics, TrainReport};

pub type Result<T, E = RankingError> = std::result::Result<T, E>;
