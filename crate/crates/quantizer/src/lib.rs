//! Residual K-means quantization of author embeddings into three-level
//! semantic codes, plus the storage arithmetic that motivates them.

mod codebook;
mod error;
pub mod kmeans;
mod quantize;
mod stats;
mod storage;

pub use codebook::{
    assign_codes, build_codebooks, reconstruct, reconstruct_prefix, reconstruction_mse, Codebook, DEFAULT_MAX_ITERS,
    DEFAULT_SIZES, PRODUCTION_SIZES,
};
pub use error::QuantError;
pub use kmeans::{kmeans, KMeans};
pub use quantize::{
    codebook_corpus, quantize_log, read_quantized_log, window_embedding, write_quantized_log, CodeSource,
    CorpusScope, QuantizedLogRecord,
};
pub use stats::{code_stats, CodeStats, PrefixGroup};
pub use storage::{bits_needed, storage_estimate, StorageEstimate, TB};

pub type Result<T, E = QuantError> = std::result::Result<T, E>;
