#[derive(Debug, Clone, PartialEq)]
pub struct RankingConfig {
    /// ID embedding width `d`; the attention output has the same width.
    pub dim: usize,
    /// Code embedding width `d_c`; `None` means `d / 4`.
    pub code_dim: Option<usize>,
    pub experts: usize,
    /// Maximum history length `L`.
    pub history_len: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            code_dim: None,
            experts: 4,
            history_len: 50,
            lr: 3e-3,
            batch_size: 256,
            epochs: 2,
            seed: 1,
        }
    }
}

impl RankingConfig {
    pub fn effective_code_dim(&self) -> usize {
        self.code_dim.unwrap_or(self.dim / 4).max(1)
    }
}
