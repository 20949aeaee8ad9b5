use larm_core::Task;

use crate::{Result, SimError};

/// Length of one live-streaming window in seconds.
pub const WINDOW_SECONDS: u64 = 30;

/// Marginal positive rate per task, indexed in [`Task::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseRates(pub [f64; Task::COUNT]);

impl BaseRates {
    pub fn get(&self, task: Task) -> f64 {
        self.0[task.index()]
    }

    pub fn set(&mut self, task: Task, rate: f64) {
        self.0[task.index()] = rate;
    }
}

impl Default for BaseRates {
    fn default() -> Self {
        // click, long_view, effective_view, like, comment, gift
        Self([0.25, 0.10, 0.15, 0.05, 0.02, 0.008])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_authors: usize,
    pub n_topics: usize,
    pub dim: usize,
    pub sessions_per_author: usize,
    pub windows_per_session: usize,
    /// Weight of the per-session random mixture; 0 freezes every author on its base topics.
    pub topic_drift: f64,
    /// Standard deviation of the per-coordinate window noise.
    pub embedding_noise: f64,
    pub base_rates: BaseRates,
    pub seed: u64,
    pub exposures_per_user: usize,
    /// Scale of the user/session topic affinity in the label logits.
    pub affinity_weight: f64,
    /// Scale of the user/author latent style match in the label logits.
    pub style_weight: f64,
    pub style_dim: usize,
    /// Dirichlet concentration for base, preference and drift mixtures.
    pub concentration: f64,
    /// Share of exposures drawn proportionally to author popularity; the rest are uniform.
    pub popularity_share: f64,
    /// Log-normal spread of author popularity.
    pub popularity_sigma: f64,
    pub long_view_seconds: u32,
    pub effective_view_seconds: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_users: 5000,
            n_authors: 500,
            n_topics: 8,
            dim: 32,
            sessions_per_author: 4,
            windows_per_session: 20,
            topic_drift: 0.6,
            embedding_noise: 0.05,
            base_rates: BaseRates::default(),
            seed: 1,
            exposures_per_user: 40,
            affinity_weight: 24.0,
            style_weight: 3.0,
            style_dim: 2,
            concentration: 0.3,
            popularity_share: 0.8,
            popularity_sigma: 1.0,
            long_view_seconds: 60,
            effective_view_seconds: 20,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_authors", self.n_authors),
            ("n_topics", self.n_topics),
            ("dim", self.dim),
            ("sessions_per_author", self.sessions_per_author),
            ("windows_per_session", self.windows_per_session),
            ("exposures_per_user", self.exposures_per_user),
            ("style_dim", self.style_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SimError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for t in Task::ALL {
            let r = self.base_rates.get(t);
            if !(r > 0.0 && r < 1.0) {
                return Err(SimError::InvalidConfig(format!("base rate of {t} = {r} outside (0,1)")));
            }
        }
        let r = |t| self.base_rates.get(t);
        let chain = [Task::Click, Task::EffectiveView, Task::LongView, Task::Like, Task::Comment, Task::Gift];
        if chain.windows(2).any(|w| r(w[0]) < r(w[1])) {
            return Err(SimError::InvalidConfig(
                "base rates must satisfy click >= effective_view >= long_view >= like >= comment >= gift".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.topic_drift) {
            return Err(SimError::InvalidConfig("topic_drift outside [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.popularity_share) {
            return Err(SimError::InvalidConfig("popularity_share outside [0,1]".into()));
        }
        let non_negative = [
            ("embedding_noise", self.embedding_noise),
            ("affinity_weight", self.affinity_weight),
            ("style_weight", self.style_weight),
            ("popularity_sigma", self.popularity_sigma),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be a non-negative number")));
            }
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(SimError::InvalidConfig("concentration must be positive".into()));
        }
        if self.effective_view_seconds < larm_core::VALID_VIEW_SECONDS
            || self.long_view_seconds <= self.effective_view_seconds
        {
            return Err(SimError::InvalidConfig(
                "thresholds must satisfy 3 <= effective_view_seconds < long_view_seconds".into(),
            ));
        }
        if self.dim > u16::MAX as usize {
            return Err(SimError::InvalidConfig("dim exceeds 65535".into()));
        }
        Ok(())
    }

    pub fn session_seconds(&self) -> u64 {
        self.windows_per_session as u64 * WINDOW_SECONDS
    }

    /// Start time of session slot `s`. Consecutive slots are separated by one idle hour.
    pub fn session_start(&self, session: usize) -> u64 {
        session as u64 * (self.session_seconds() + 3600)
    }

    pub fn n_windows(&self) -> usize {
        self.n_authors * self.sessions_per_author * self.windows_per_session
    }
}
