use std::fmt;
use std::str::FromStr;

/// Which item representation the tower produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `MLP_item(aID)` only.
    IdOnly,
    /// `MLP_llm(30s ⊕ pooling)` only; the ID embedding is dropped.
    LlmOnly,
    /// `λ·MLP_llm(...) + (1-λ)·MLP_item(aID)` with `λ = σ(Gate(aID))`.
    GatedFusion,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::IdOnly, Variant::LlmOnly, Variant::GatedFusion];

    pub fn name(self) -> &'static str {
        match self {
            Variant::IdOnly => "id_only",
            Variant::LlmOnly => "llm_only",
            Variant::GatedFusion => "gated_fusion",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown retrieval variant '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitRateDenominator {
    /// `|P ∩ R| / |R|`.
    Precision,
    /// `|P ∩ R| / |P|`.
    Recall,
}

impl HitRateDenominator {
    pub fn name(self) -> &'static str {
        match self {
            HitRateDenominator::Precision => "precision",
            HitRateDenominator::Recall => "recall",
        }
    }
}

impl FromStr for HitRateDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "precision" => Ok(Self::Precision),
            "recall" => Ok(Self::Recall),
            _ => Err(format!("unknown hitrate denominator '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub variant: Variant,
    /// Adds sum-pooled semantic codes of the user's recent views to the user tower.
    pub user_codes: bool,
    pub tau: f64,
    pub lr: f64,
    /// Decoupled Adam weight decay.
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Upper bound on training epochs.
    pub epochs: usize,
    /// Trailing share of the training log held out to pick the epoch with
    /// the best validation HitRate; 0 trains for exactly `epochs`.
    pub val_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub normalize: bool,
    /// Unit-normalize each item branch before the gated mix.
    pub branch_norm: bool,
    pub hitrate_k: usize,
    pub hitrate_denominator: HitRateDenominator,
    /// Width of each level's code embedding in the user tower.
    pub code_dim: usize,
    pub history_len: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            variant: Variant::GatedFusion,
            user_codes: false,
            tau: 0.1,
            lr: 1e-2,
            weight_decay: 0.0,
            batch_size: 256,
            epochs: 12,
            val_fraction: 0.1,
            patience: 2,
            normalize: true,
            branch_norm: true,
            hitrate_k: 100,
            hitrate_denominator: HitRateDenominator::Precision,
            code_dim: 8,
            history_len: 50,
            seed: 1,
        }
    }
}
