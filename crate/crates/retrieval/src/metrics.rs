use std::collections::{BTreeMap, BTreeSet};

use larm_core::{InteractionEvent, Task, ViewHistory};

use crate::{retrieve_topk, AuthorIndex, HitRateDenominator, Result, RetrievalError, TwoTowerModel};

/// Overlap between a watched set `P` and a retrieved list `R`.
pub fn hit_rate(watched: &BTreeSet<u32>, retrieved: &[u32], denominator: HitRateDenominator) -> Result<f64> {
    if retrieved.is_empty() {
        return Err(RetrievalError::EmptyR);
    }
    let hits = retrieved.iter().filter(|a| watched.contains(a)).count() as f64;
    match denominator {
        HitRateDenominator::Precision => Ok(hits / retrieved.len() as f64),
        HitRateDenominator::Recall if watched.is_empty() => Err(RetrievalError::EmptyP),
        HitRateDenominator::Recall => Ok(hits / watched.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitRateReport {
    pub k: usize,
    /// Mean over users of `|P∩R| / |R|`.
    pub precision: f64,
    /// Mean over users of `|P∩R| / |P|`.
    pub recall: f64,
    pub users: usize,
}

impl HitRateReport {
    pub fn value(&self, denominator: HitRateDenominator) -> f64 {
        match denominator {
            HitRateDenominator::Precision => self.precision,
            HitRateDenominator::Recall => self.recall,
        }
    }
}

/// HitRate@K over every user with at least one click in `eval`. `P` is the
/// deduplicated set of clicked authors. With `history`, the user tower sees
/// the user's last `history_len` valid views before the first eval event.
pub fn evaluate_hit_rate(
    model: &TwoTowerModel,
    index: &AuthorIndex,
    eval: &[InteractionEvent],
    history: Option<&ViewHistory>,
    history_len: usize,
    k: usize,
) -> Result<HitRateReport> {
    let mut watched: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for e in eval.iter().filter(|e| e.label(Task::Click)) {
        watched.entry(e.user_id).or_default().insert(e.author_id);
    }
    let cutoff = eval.iter().map(|e| e.timestamp).min().unwrap_or(0);
    let users: Vec<usize> = watched.keys().map(|&u| u as usize).collect();
    let histories: Vec<Vec<_>> = users
        .iter()
        .map(|&u| match (history, &model.params.user_codes) {
            (Some(h), Some(_)) => h.before(u as u32, cutoff, history_len).iter().map(|e| e.code).collect(),
            _ => Vec::new(),
        })
        .collect();
    let reps = model.user_reps(&users, &histories)?;
    let (mut literal, mut recall) = (0.0, 0.0);
    for (i, p) in watched.values().enumerate() {
        let r = retrieve_topk(index, reps.row(i), k)?;
        literal += hit_rate(p, &r, HitRateDenominator::Precision)?;
        recall += hit_rate(p, &r, HitRateDenominator::Recall)?;
    }
    let n = users.len().max(1) as f64;
    Ok(HitRateReport {
        k,
        precision: literal / n,
        recall: recall / n,
        users: users.len(),
    })
}
