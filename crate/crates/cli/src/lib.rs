//! Drives the simulate → retrieval → codebooks → quantize → ranking
//! pipeline, one stage per subcommand, with artifacts named by config hash.

pub mod config;
mod error;
pub mod metrics;
mod report;
pub mod stages;

use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};

pub use config::{parse_config, parse_config_str, ConfigError, PipelineConfig, QuantizerConfig};
pub use error::CliError;
pub use report::{empty_report_message, report, RunReport};
pub use stages::{CodeKind, Depth, RankingVariant, RetrievalVariant, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    TrainRetrieval,
    EvalRetrieval,
    BuildCodebooks,
    Quantize,
    TrainRanking,
    EvalRanking,
    Report,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::TrainRetrieval => "train-retrieval",
            Self::EvalRetrieval => "eval-retrieval",
            Self::BuildCodebooks => "build-codebooks",
            Self::Quantize => "quantize",
            Self::TrainRanking => "train-ranking",
            Self::EvalRanking => "eval-ranking",
            Self::Report => "report",
        }
    }
}

fn parse_all<T: std::str::FromStr<Err = CliError> + Copy>(variant: Option<&str>, default: &[T]) -> Result<Vec<T>> {
    match variant {
        Some(v) => Ok(vec![v.parse()?]),
        None => Ok(default.to_vec()),
    }
}

/// Runs one stage. `variant` narrows the models a stage handles; without it
/// train/eval-retrieval cover the three base variants and the other model
/// stages cover all of theirs. The report stage returns its text, or the
/// empty-report message when nothing has run.
pub fn run_subcommand(ws: &Workspace, cmd: Subcommand, variant: Option<&str>) -> Result<Option<String>> {
    let stage = || format!("stage {}", cmd.name());
    match cmd {
        Subcommand::Simulate | Subcommand::Report if variant.is_some() => {
            return Err(CliError::Usage(format!("{} takes no --variant", cmd.name())).into());
        }
        Subcommand::Simulate => stages::simulate(ws).with_context(stage)?,
        Subcommand::TrainRetrieval => {
            for v in parse_all(variant, &RetrievalVariant::BASE)? {
                stages::train_retrieval_stage(ws, v).with_context(stage)?;
            }
        }
        Subcommand::EvalRetrieval => {
            for v in parse_all(variant, &RetrievalVariant::BASE)? {
                stages::eval_retrieval_stage(ws, v).with_context(stage)?;
            }
        }
        Subcommand::BuildCodebooks => {
            for k in parse_all(variant, &CodeKind::ALL)? {
                stages::build_codebooks_stage(ws, k).with_context(stage)?;
            }
        }
        Subcommand::Quantize => {
            for k in parse_all(variant, &CodeKind::ALL)? {
                stages::quantize_stage(ws, k).with_context(stage)?;
            }
        }
        Subcommand::TrainRanking => {
            for v in parse_all(variant, &RankingVariant::ALL)? {
                stages::train_ranking_stage(ws, v).with_context(stage)?;
            }
        }
        Subcommand::EvalRanking => {
            for v in parse_all(variant, &RankingVariant::ALL)? {
                stages::eval_ranking_stage(ws, v).with_context(stage)?;
            }
        }
        Subcommand::Report => {
            let text = match report(ws, &[]).with_context(stage)? {
                Some(r) => r.text,
                None => empty_report_message(ws),
            };
            return Ok(Some(text));
        }
    }
    Ok(None)
}

/// The stage sequence `run_pipeline` executes, as (subcommand, variant).
pub const PIPELINE: [(Subcommand, Option<&str>); 10] = [
    (Subcommand::Simulate, None),
    (Subcommand::TrainRetrieval, None),
    (Subcommand::EvalRetrieval, None),
    (Subcommand::BuildCodebooks, None),
    (Subcommand::Quantize, None),
    (Subcommand::TrainRetrieval, Some("user_codes")),
    (Subcommand::EvalRetrieval, Some("user_codes")),
    (Subcommand::TrainRanking, None),
    (Subcommand::EvalRanking, None),
    (Subcommand::Report, None),
];

/// Runs every stage in order into `out` and returns the report, whose text
/// ends with per-stage wall-clock times.
pub fn run_pipeline(config: &PipelineConfig, out: &Path, quiet: bool) -> Result<RunReport> {
    let ws = Workspace::new(config.clone(), out, quiet)?;
    let mut timings: Vec<(String, Duration)> = Vec::new();
    for (cmd, variant) in PIPELINE {
        if cmd == Subcommand::Report {
            break;
        }
        let start = Instant::now();
        run_subcommand(&ws, cmd, variant)?;
        let label = match variant {
            Some(v) => format!("{} {v}", cmd.name()),
            None => cmd.name().to_string(),
        };
        timings.push((label, start.elapsed()));
    }
    report(&ws, &timings)?.context("pipeline produced no metrics")
}
