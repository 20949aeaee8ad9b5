use std::path::Path;

use anyhow::{Context, Result};

use crate::error::CliError;

/// `prefix.key=value` lines written by one stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    prefix: String,
    pub entries: Vec<(String, String)>,
}

impl Metrics {
    pub fn new(prefix: &str) -> Self {
        Self { prefix: prefix.to_string(), entries: Vec::new() }
    }

    fn push(&mut self, key: &str, value: String) {
        self.entries.push((format!("{}.{key}", self.prefix), value));
    }

    pub fn int(&mut self, key: &str, v: usize) {
        self.push(key, v.to_string());
    }

    pub fn text(&mut self, key: &str, v: &str) {
        self.push(key, v.to_string());
    }

    /// Rejects NaN and infinities.
    pub fn float(&mut self, key: &str, v: f64) -> Result<(), CliError> {
        if !v.is_finite() {
            return Err(CliError::NonFiniteMetric(format!("{}.{key}", self.prefix)));
        }
        self.push(key, v.to_string());
        Ok(())
    }

    /// `na` when the metric is undefined.
    pub fn optional(&mut self, key: &str, v: Option<f64>) -> Result<(), CliError> {
        match v {
            Some(v) => self.float(key, v),
            None => {
                self.push(key, "na".to_string());
                Ok(())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, render(&self.entries)).with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn render(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
