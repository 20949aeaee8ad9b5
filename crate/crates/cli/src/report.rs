use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use anyhow::{Context, Result};
use larm_core::Task;

use crate::metrics::{self, render};
use crate::stages::{CodeKind, Depth, RankingVariant, RetrievalVariant, Workspace};

/// Metrics gathered from every stage that has run, plus stage timings when
/// the report comes from a full pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub metrics: Vec<(String, String)>,
    pub timings: Vec<(String, Duration)>,
    pub text: String,
}

impl RunReport {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

fn metric_files(ws: &Workspace) -> Vec<std::path::PathBuf> {
    let mut files = vec![ws.metrics_path("simulate", "world", Depth::Simulate)];
    for v in RetrievalVariant::ALL {
        let depth = if v == RetrievalVariant::UserCodes { Depth::Quantizer } else { Depth::Retrieval };
        files.push(ws.metrics_path("retrieval", v.name(), depth));
    }
    for k in CodeKind::ALL {
        files.push(ws.metrics_path("codebooks", k.name(), Depth::Quantizer));
    }
    files.push(ws.metrics_path("codebooks", "storage", Depth::Quantizer));
    for k in CodeKind::ALL {
        files.push(ws.metrics_path("quantize", k.name(), Depth::Quantizer));
    }
    for v in RankingVariant::ALL {
        files.push(ws.metrics_path("ranking", v.name(), Depth::Ranking));
    }
    files
}

/// Collects stage metrics into `metrics-<hash>.txt` and `report-<hash>.txt`.
/// Returns `None` when no stage has produced metrics for this config.
pub fn report(ws: &Workspace, timings: &[(String, Duration)]) -> Result<Option<RunReport>> {
    let mut entries = Vec::new();
    for path in metric_files(ws) {
        if path.exists() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            entries.extend(metrics::parse(&text));
        }
    }
    if entries.is_empty() {
        return Ok(None);
    }
    let text = render_text(ws, &entries, timings);
    let metrics_path = ws.artifact("metrics", Depth::Ranking, "txt");
    std::fs::write(&metrics_path, render(&entries)).with_context(|| format!("cannot write {}", metrics_path.display()))?;
    let report_path = ws.artifact("report", Depth::Ranking, "txt");
    std::fs::write(&report_path, &text).with_context(|| format!("cannot write {}", report_path.display()))?;
    Ok(Some(RunReport { metrics: entries, timings: timings.to_vec(), text }))
}

pub fn empty_report_message(ws: &Workspace) -> String {
    format!(
        "empty report: no stage artifacts in {} for config {}",
        ws.out.display(),
        ws.hash(Depth::Ranking)
    )
}

fn render_text(ws: &Workspace, entries: &[(String, String)], timings: &[(String, Duration)]) -> String {
    let m: BTreeMap<&str, &str> = entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let get = |k: &str| m.get(k).copied();
    let num = |k: &str| get(k).and_then(|v| v.parse::<f64>().ok()).map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut s = String::new();
    let _ = writeln!(s, "LARM pipeline report");
    let _ = writeln!(s, "seed {}, config {}", ws.config.seed, ws.hash(Depth::Ranking));

    if let Some(events) = get("simulate.events") {
        let _ = writeln!(s, "\n[simulate]");
        let _ = writeln!(
            s,
            "events {events} (train {}, eval {}), users {}, authors {}, windows {}",
            get("simulate.train_events").unwrap_or("-"),
            get("simulate.eval_events").unwrap_or("-"),
            get("simulate.users").unwrap_or("-"),
            get("simulate.authors").unwrap_or("-"),
            get("simulate.windows").unwrap_or("-"),
        );
        let rates: Vec<String> =
            Task::ALL.iter().map(|t| format!("{} {}", t.name(), num(&format!("simulate.{}_rate", t.name())))).collect();
        let _ = writeln!(s, "label rates: {}", rates.join(", "));
    }

    let retrieval: Vec<_> =
        RetrievalVariant::ALL.iter().filter(|v| get(&format!("retrieval.{}.k", v.name())).is_some()).collect();
    if !retrieval.is_empty() {
        let _ = writeln!(s, "\n[retrieval]");
        let _ = writeln!(
            s,
            "{:<14} {:>4} {:>14} {:>14} {:>8} {:>10}",
            "variant", "K", "precision", "recall", "gate", "epochs"
        );
        for v in retrieval {
            let p = format!("retrieval.{}", v.name());
            let _ = writeln!(
                s,
                "{:<14} {:>4} {:>14} {:>14} {:>8} {:>10}",
                v.name(),
                get(&format!("{p}.k")).unwrap_or("-"),
                num(&format!("{p}.hitrate_precision")),
                num(&format!("{p}.hitrate_recall")),
                num(&format!("{p}.gate_mean")),
                epochs(get(&format!("{p}.epochs_trained"))),
            );
        }
    }

    let codebooks: Vec<_> =
        CodeKind::ALL.iter().filter(|k| get(&format!("codebooks.{}.sizes", k.name())).is_some()).collect();
    if !codebooks.is_empty() {
        let _ = writeln!(s, "\n[codebooks]");
        let _ = writeln!(s, "{:<8} {:>10} {:>12} {:>12} {:>12}", "source", "sizes", "mse_l1", "mse_l2", "mse_l3");
        for k in codebooks {
            let p = format!("codebooks.{}", k.name());
            let _ = writeln!(
                s,
                "{:<8} {:>10} {:>12} {:>12} {:>12}",
                k.name(),
                get(&format!("{p}.sizes")).unwrap_or("-"),
                num(&format!("{p}.level1_mse")),
                num(&format!("{p}.level2_mse")),
                num(&format!("{p}.level3_mse")),
            );
        }
    }
    if let Some(raw) = get("storage.production_raw_bytes") {
        let tb = |v: Option<&str>| v.and_then(|v| v.parse::<f64>().ok()).map_or("-".to_string(), |b| format!("{}", b / 1e12));
        let _ = writeln!(
            s,
            "storage at production scale: {} TB raw vs {} TB coded (ratio {})",
            tb(Some(raw)),
            tb(get("storage.production_coded_bytes")),
            num("storage.production_ratio"),
        );
        let _ = writeln!(
            s,
            "storage at this scale: {} bytes raw vs {} bytes coded at {} bits per code",
            get("storage.config_raw_bytes").unwrap_or("-"),
            get("storage.config_coded_bytes").unwrap_or("-"),
            get("storage.code_bits").unwrap_or("-"),
        );
    }

    let quantized: Vec<_> =
        CodeKind::ALL.iter().filter(|k| get(&format!("quantize.{}.records", k.name())).is_some()).collect();
    if !quantized.is_empty() {
        let _ = writeln!(s, "\n[quantize]");
        for k in quantized {
            let p = format!("quantize.{}", k.name());
            let g = |f: &str| get(&format!("{p}.{f}")).unwrap_or("-");
            let _ = writeln!(
                s,
                "{:<8} records {}, codes used {}/{}/{}, prefix groups {}, max authors per prefix {}",
                k.name(),
                g("records"),
                g("level1_codes_used"),
                g("level2_codes_used"),
                g("level3_codes_used"),
                g("prefix_groups"),
                g("max_authors_per_prefix"),
            );
        }
    }

    let ranking: Vec<_> =
        RankingVariant::ALL.iter().filter(|v| get(&format!("ranking.{}.epochs_trained", v.name())).is_some()).collect();
    if !ranking.is_empty() {
        let _ = writeln!(s, "\n[ranking]");
        let _ = writeln!(s, "{:<8} {:<16} {:>8} {:>8} {:>9}", "codes", "task", "auc", "gauc", "positives");
        for v in ranking {
            let p = format!("ranking.{}", v.name());
            let _ = writeln!(s, "{:<8} {}", v.name(), epochs(get(&format!("{p}.epochs_trained"))));
            for t in Task::ALL {
                let q = format!("{p}.{}", t.name());
                let _ = writeln!(
                    s,
                    "{:<8} {:<16} {:>8} {:>8} {:>9}",
                    "",
                    t.name(),
                    num(&format!("{q}_auc")),
                    num(&format!("{q}_gauc")),
                    get(&format!("{q}_positives")).unwrap_or("-"),
                );
            }
        }
    }

    if !timings.is_empty() {
        let _ = writeln!(s, "\n[timings]");
        for (stage, d) in timings {
            let _ = writeln!(s, "{stage:<32} {:>8.2}s", d.as_secs_f64());
        }
    }
    s
}

fn epochs(v: Option<&str>) -> String {
    match v {
        Some("0") => "untrained".to_string(),
        Some(n) => format!("{n} epochs"),
        None => "-".to_string(),
    }
}
