use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use larm_core::Task;
use larm_quantizer::{CorpusScope, DEFAULT_MAX_ITERS, DEFAULT_SIZES};
use larm_ranking::RankingConfig;
use larm_retrieval::{HitRateDenominator, RetrievalConfig};
use larm_simgen::WorldConfig;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerConfig {
    pub sizes: [usize; 3],
    pub max_iters: usize,
    pub scope: CorpusScope,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES,
            max_iters: DEFAULT_MAX_ITERS,
            scope: CorpusScope::AuthorLatest,
        }
    }
}

/// Every stage's settings. `seed` overrides the per-stage seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Share of the time-sorted log used for training.
    pub split_fraction: f64,
    pub world: WorldConfig,
    pub retrieval: RetrievalConfig,
    pub quantizer: QuantizerConfig,
    pub ranking: RankingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            split_fraction: 0.75,
            world: WorldConfig::default(),
            retrieval: RetrievalConfig::default(),
            quantizer: QuantizerConfig::default(),
            ranking: RankingConfig::default(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("'{s}': {e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(usize, u32, u64, f64, bool);

impl ConfigValue for Option<usize> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(None);
        }
        usize::parse_value(s).map(Some)
    }

    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.to_string())
    }
}

impl ConfigValue for [usize; 3] {
    fn parse_value(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("expected three comma-separated sizes, got '{s}'"));
        };
        Ok([usize::parse_value(a)?, usize::parse_value(b)?, usize::parse_value(c)?])
    }

    fn render(&self) -> String {
        format!("{},{},{}", self[0], self[1], self[2])
    }
}

impl ConfigValue for HitRateDenominator {
    fn parse_value(s: &str) -> Result<Self, String> {
        Self::from_str(s)
    }

    fn render(&self) -> String {
        self.name().to_string()
    }
}

impl ConfigValue for CorpusScope {
    fn parse_value(s: &str) -> Result<Self, String> {
        Self::from_str(s)
    }

    fn render(&self) -> String {
        self.name().to_string()
    }
}

fn assign<T: ConfigValue>(slot: &mut T, value: &str) -> Result<(), String> {
    *slot = T::parse_value(value)?;
    Ok(())
}

/// Generates the setter and the canonical dump for one section.
macro_rules! section {
    ($set:ident, $dump:ident, $ty:ty, [$($field:ident),* $(,)?]) => {
        fn $set(c: &mut $ty, key: &str, value: &str) -> Option<Result<(), String>> {
            match key {
                $(stringify!($field) => Some(assign(&mut c.$field, value)),)*
                _ => None,
            }
        }

        fn $dump(c: &$ty, section: &str, out: &mut Vec<(String, String)>) {
            $(out.push((format!("{section}.{}", stringify!($field)), c.$field.render()));)*
        }
    };
}

section!(set_world_field, dump_world_fields, WorldConfig, [
    n_users, n_authors, n_topics, dim, sessions_per_author, windows_per_session, topic_drift,
    embedding_noise, exposures_per_user, affinity_weight, style_weight, style_dim, concentration,
    popularity_share, popularity_sigma, long_view_seconds, effective_view_seconds,
]);

section!(set_retrieval, dump_retrieval, RetrievalConfig, [
    tau, lr, weight_decay, batch_size, epochs, val_fraction, patience, normalize, branch_norm,
    hitrate_k, hitrate_denominator, code_dim, history_len,
]);

section!(set_quantizer, dump_quantizer, QuantizerConfig, [sizes, max_iters, scope]);

section!(set_ranking, dump_ranking, RankingConfig, [dim, code_dim, experts, history_len, lr, batch_size, epochs]);

fn set_world(c: &mut WorldConfig, key: &str, value: &str) -> Option<Result<(), String>> {
    if let Some(task) = key.strip_prefix("base_rate.") {
        let task = Task::ALL.into_iter().find(|t| t.name() == task)?;
        let mut rate = c.base_rates.get(task);
        return Some(assign(&mut rate, value).map(|()| c.base_rates.set(task, rate)));
    }
    set_world_field(c, key, value)
}

impl PipelineConfig {
    /// Sets `section.key` (or a top-level `key` when `section` is empty).
    /// `None` means the key is unknown.
    fn set(&mut self, section: &str, key: &str, value: &str) -> Option<Result<(), String>> {
        match section {
            "" | "pipeline" => match key {
                "seed" => Some(assign(&mut self.seed, value)),
                "split_fraction" => Some(assign(&mut self.split_fraction, value)),
                _ => None,
            },
            "world" => set_world(&mut self.world, key, value),
            "retrieval" => set_retrieval(&mut self.retrieval, key, value),
            "quantizer" => set_quantizer(&mut self.quantizer, key, value),
            "ranking" => set_ranking(&mut self.ranking, key, value),
            _ => None,
        }
    }

    /// Canonical `section.key` / value pairs of one section, in a fixed order.
    pub fn section_entries(&self, section: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        match section {
            "pipeline" => {
                out.push(("pipeline.seed".into(), self.seed.render()));
                out.push(("pipeline.split_fraction".into(), self.split_fraction.render()));
            }
            "world" => {
                dump_world_fields(&self.world, "world", &mut out);
                for t in Task::ALL {
                    out.push((format!("world.base_rate.{}", t.name()), self.world.base_rates.get(t).render()));
                }
            }
            "retrieval" => dump_retrieval(&self.retrieval, "retrieval", &mut out),
            "quantizer" => dump_quantizer(&self.quantizer, "quantizer", &mut out),
            "ranking" => dump_ranking(&self.ranking, "ranking", &mut out),
            _ => {}
        }
        out
    }

    /// The full configuration in the same syntax [`parse_config_str`] reads.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for section in SECTIONS {
            for (k, v) in self.section_entries(section) {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    /// Short content hash of the given sections.
    pub fn hash_of(&self, sections: &[&str]) -> String {
        let mut h = Sha256::new();
        for section in sections {
            for (k, v) in self.section_entries(section) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Stage configs with the pipeline seed applied.
    pub fn world_config(&self) -> WorldConfig {
        WorldConfig { seed: self.seed, ..self.world.clone() }
    }

    pub fn retrieval_config(&self) -> RetrievalConfig {
        RetrievalConfig { seed: self.seed, ..self.retrieval.clone() }
    }

    pub fn ranking_config(&self) -> RankingConfig {
        RankingConfig { seed: self.seed, ..self.ranking.clone() }
    }
}

pub const SECTIONS: [&str; 5] = ["pipeline", "world", "retrieval", "quantizer", "ranking"];

/// Parses `key = value` lines under optional `[section]` headers. Keys may
/// also be written as `section.key` anywhere. `#` starts a comment.
pub fn parse_config_str(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut config = PipelineConfig::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("unterminated section header '{line}'"),
            })?;
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::Parse { line: line_no, message: format!("unknown section '{name}'") });
            }
            section = name.to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse { line: line_no, message: format!("expected 'key = value', got '{line}'") });
        };
        let (key, value) = (key.trim(), value.trim());
        let (sec, k) = match key.split_once('.') {
            Some((s, k)) if SECTIONS.contains(&s) => (s, k),
            _ => (section.as_str(), key),
        };
        match config.set(sec, k, value) {
            Some(Ok(())) => {}
            Some(Err(message)) => return Err(ConfigError::Parse { line: line_no, message: format!("{key}: {message}") }),
            None => return Err(ConfigError::UnknownKey { line: line_no, key: key.to_string() }),
        }
    }
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config_str("").unwrap(), PipelineConfig::default());
        assert_eq!(parse_config_str("# nothing\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn dotted_and_sectioned_keys() {
        let c = parse_config_str("retrieval.tau = 0.05\nseed = 9\n[world]\nn_users = 10\nbase_rate.gift = 0.01\n[quantizer]\nsizes = 8, 4, 2\n").unwrap();
        assert_eq!(c.retrieval.tau, 0.05);
        assert_eq!(c.seed, 9);
        assert_eq!(c.world.n_users, 10);
        assert_eq!(c.world.base_rates.get(Task::Gift), 0.01);
        assert_eq!(c.quantizer.sizes, [8, 4, 2]);
        assert_eq!(c.world_config().seed, 9);
        assert_eq!(c.ranking_config().seed, 9);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(parse_config_str("seed = 1\nthis is not valid"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("[retrieval]\ntau = abc"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("[world\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config_str("[nope]\n"), Err(ConfigError::Parse { line: 1, .. })));
        match parse_config_str("\n[ranking]\nwidth = 3") {
            Err(ConfigError::UnknownKey { line: 3, key }) => assert_eq!(key, "width"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config_str("world.base_rate.nope = 0.1"), Err(ConfigError::UnknownKey { .. })));
    }

    #[test]
    fn dump_round_trips() {
        let mut c = PipelineConfig::default();
        c.seed = 4;
        c.retrieval.lr = 0.003;
        c.ranking.code_dim = Some(3);
        c.quantizer.scope = CorpusScope::AllWindows;
        assert_eq!(parse_config_str(&c.dump()).unwrap(), c);
    }

    #[test]
    fn hashes_follow_their_sections() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.ranking.lr = 0.5;
        assert_eq!(a.hash_of(&["pipeline", "world"]), b.hash_of(&["pipeline", "world"]));
        assert_ne!(a.hash_of(&SECTIONS), b.hash_of(&SECTIONS));
        assert_eq!(a.hash_of(&["world"]).len(), 12);
    }
}
