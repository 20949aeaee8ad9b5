use larm_core::{InteractionEvent, Rng, SemanticCode, Task, ViewHistory};
use larm_nnkit::{Adam, AdamConfig, Matrix};
use larm_simgen::WindowStore;

use crate::{
    build_index, evaluate_hit_rate, GateStats, PairBatch, Result, RetrievalConfig, RetrievalError, TwoTowerModel,
    TwoTowerParams,
};

const STREAM_INIT: u64 = 0x5245_5452;
const STREAM_SHUFFLE: u64 = 0x5348_5546;

/// One positive pair: a click joined to its exposed window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub user: usize,
    pub author: usize,
    /// Position of the exposed window in the [`WindowStore`].
    pub window: usize,
    pub history: Vec<SemanticCode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Validation HitRate after each epoch; empty without a holdout.
    pub val_hit_rates: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub gate_stats: GateStats,
    pub pairs: usize,
}

/// Joins clicked events to their windows and, when given, to the user's
/// view history strictly before the event.
pub fn build_pairs(
    log: &[InteractionEvent],
    windows: &WindowStore,
    history: Option<&ViewHistory>,
    history_len: usize,
) -> Result<Vec<TrainingPair>> {
    log.iter()
        .filter(|e| e.label(Task::Click))
        .map(|e| {
            let window = windows
                .position(e.author_id, e.session_id, e.window_index)
                .ok_or(RetrievalError::MissingWindow(e.author_id))?;
            let history = history
                .map(|h| h.before(e.user_id, e.timestamp, history_len).iter().map(|v| v.code).collect())
                .unwrap_or_default();
            Ok(TrainingPair {
                user: e.user_id as usize,
                author: e.author_id as usize,
                window,
                history,
            })
        })
        .collect()
}

fn make_batch(pairs: &[&TrainingPair], windows: &WindowStore) -> PairBatch {
    let d = windows.dim();
    let mut llm_input = Matrix::zeros(pairs.len(), 2 * d);
    for (i, p) in pairs.iter().enumerate() {
        let w = &windows.windows[p.window];
        let row = llm_input.row_mut(i);
        row[..d].copy_from_slice(&w.mm_embedding);
        row[d..].copy_from_slice(&w.pooled);
    }
    PairBatch {
        users: pairs.iter().map(|p| p.user).collect(),
        authors: pairs.iter().map(|p| p.author).collect(),
        llm_input,
        histories: pairs.iter().map(|p| p.history.clone()).collect(),
    }
}

/// Trains a two-tower model on the clicked events of `log` with Adam.
///
/// `codes` carries the view history and code table sizes when the user
/// tower pools semantic codes (`config.user_codes`). With a positive
/// `val_fraction` the tail of `log` is held out and the parameters from the
/// epoch with the best validation HitRate are returned.
pub fn train_retrieval(
    log: &[InteractionEvent],
    windows: &WindowStore,
    n_users: usize,
    codes: Option<(&ViewHistory, [usize; 3])>,
    config: &RetrievalConfig,
) -> Result<(TwoTowerModel, TrainReport)> {
    train_retrieval_observed(log, windows, n_users, codes, config, &mut |_, _| {})
}

/// As [`train_retrieval`], calling `observer(epoch, model)` after every
/// epoch.
pub fn train_retrieval_observed(
    log: &[InteractionEvent],
    windows: &WindowStore,
    n_users: usize,
    codes: Option<(&ViewHistory, [usize; 3])>,
    config: &RetrievalConfig,
    observer: &mut dyn FnMut(usize, &TwoTowerModel),
) -> Result<(TwoTowerModel, TrainReport)> {
    let codes = if config.user_codes { codes } else { None };
    if config.user_codes && codes.is_none() {
        return Err(RetrievalError::NoCodeTables);
    }
    let history = codes.map(|c| c.0);
    let (fit, val) = holdout(log, config.val_fraction);
    let pairs = build_pairs(fit, windows, history, config.history_len)?;
    if pairs.is_empty() {
        return Err(RetrievalError::NoPositives);
    }
    let mut rng = Rng::substream(config.seed, STREAM_INIT);
    let params = TwoTowerParams::init(
        n_users,
        windows.n_authors,
        windows.dim(),
        codes.map(|(_, sizes)| (sizes, config.code_dim)),
        &mut rng,
    );
    let mut model = TwoTowerModel {
        params,
        variant: config.variant,
        tau: config.tau,
        normalize: config.normalize,
        branch_norm: config.branch_norm,
    };
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..Default::default()
    });
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut val_hit_rates = Vec::new();
    let mut best: Option<(f64, usize, TwoTowerParams)> = None;
    let batch_size = config.batch_size.max(2);
    for epoch in 0..config.epochs {
        let mut shuffle = Rng::substream(config.seed, STREAM_SHUFFLE + epoch as u64);
        shuffle.shuffle(&mut order);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let refs: Vec<&TrainingPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let batch = make_batch(&refs, windows);
            let (loss, grads) = model.batch_loss(&batch)?;
            if !loss.is_finite() {
                return Err(RetrievalError::NonFinite(epoch));
            }
            adam.step(&mut model.params, &grads)?;
            total += loss;
            batches += 1;
        }
        epoch_losses.push(total / batches.max(1) as f64);
        observer(epoch, &model);

        if let Some(val) = val {
            let index = build_index(&model, windows)?;
            let report = evaluate_hit_rate(&model, &index, val, history, config.history_len, config.hitrate_k.min(index.len()))?;
            // Recall rather than the configured denominator: |R| is fixed, so
            // the precision rate is coarse and ties across epochs.
            let score = report.recall;
            val_hit_rates.push(score);
            match &best {
                Some((s, _, _)) if score <= *s => {}
                _ => best = Some((score, epoch, model.params.clone())),
            }
            if let Some((_, b, _)) = &best {
                if epoch - b >= config.patience {
                    break;
                }
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => epoch_losses.len().saturating_sub(1),
    };
    let gate_stats = model.gate_stats();
    Ok((
        model,
        TrainReport {
            epoch_losses,
            val_hit_rates,
            best_epoch,
            gate_stats,
            pairs: pairs.len(),
        },
    ))
}

/// Splits off the trailing `fraction` of a time-sorted log as validation
/// data. Returns no validation slice when it would hold no clicks or leave
/// no training events.
fn holdout(log: &[InteractionEvent], fraction: f64) -> (&[InteractionEvent], Option<&[InteractionEvent]>) {
    if !(fraction > 0.0) || log.len() < 2 {
        return (log, None);
    }
    let mut cut = ((1.0 - fraction) * log.len() as f64).floor() as usize;
    while cut > 0 && cut < log.len() && log[cut].timestamp == log[cut - 1].timestamp {
        cut += 1;
    }
    let (fit, val) = log.split_at(cut.min(log.len()));
    if fit.is_empty() || !val.iter().any(|e| e.label(Task::Click)) {
        return (log, None);
    }
    (fit, Some(val))
}
