/// Bytes per terabyte in reports.
pub const TB: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageEstimate {
    pub raw_bytes: u128,
    pub coded_bytes: u128,
    /// `raw_bytes / coded_bytes`.
    pub ratio: f64,
}

impl StorageEstimate {
    pub fn raw_tb(&self) -> f64 {
        self.raw_bytes as f64 / TB
    }

    pub fn coded_tb(&self) -> f64 {
        self.coded_bytes as f64 / TB
    }
}

/// Storage for per-user viewing histories kept as float embeddings versus
/// as integer codes.
pub fn storage_estimate(
    n_users: u64,
    seq_len: u64,
    float_dim: u64,
    float_bits: u64,
    n_codes: u64,
    code_bits: u64,
) -> StorageEstimate {
    let events = n_users as u128 * seq_len as u128;
    let raw_bytes = events * float_dim as u128 * float_bits as u128 / 8;
    let coded_bytes = events * n_codes as u128 * code_bits as u128 / 8;
    StorageEstimate {
        raw_bytes,
        coded_bytes,
        ratio: raw_bytes as f64 / coded_bytes as f64,
    }
}

/// Smallest number of bits that can index `k` centroids.
pub fn bits_needed(k: usize) -> u32 {
    usize::BITS - k.saturating_sub(1).leading_zeros()
}
