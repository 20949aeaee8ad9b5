use larm_core::{HistoryEntry, Rng, SemanticCode, Task, ViewHistory};
use larm_nnkit::{Adam, AdamConfig, Matrix};
use larm_quantizer::QuantizedLogRecord;

use crate::{auc, gauc, RankingBatch, RankingConfig, RankingError, RankingModel, RankingParams, Result};

const STREAM_INIT: u64 = 0x5241_4e4b;
const STREAM_SHUFFLE: u64 = 0x5253_4846;
const EVAL_BATCH: usize = 1024;

/// One exposure with the user's valid views strictly before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingExample<'a> {
    pub user: u32,
    pub author: u32,
    pub code: SemanticCode,
    pub history: &'a [HistoryEntry],
    pub labels: [bool; Task::COUNT],
}

pub fn build_examples<'a>(
    records: &[QuantizedLogRecord],
    history: &'a ViewHistory,
    history_len: usize,
) -> Vec<RankingExample<'a>> {
    records
        .iter()
        .map(|r| RankingExample {
            user: r.event.user_id,
            author: r.event.author_id,
            code: r.code,
            history: history.before(r.event.user_id, r.event.timestamp, history_len),
            labels: r.event.labels.as_array(),
        })
        .collect()
}

fn make_batch(examples: &[&RankingExample<'_>], tasks: &[Task], with_history: bool) -> RankingBatch {
    let mut labels = Matrix::zeros(examples.len(), tasks.len());
    for (i, e) in examples.iter().enumerate() {
        for (t, task) in tasks.iter().enumerate() {
            labels.set(i, t, if e.labels[task.index()] { 1.0 } else { 0.0 });
        }
    }
    RankingBatch {
        users: examples.iter().map(|e| e.user).collect(),
        authors: examples.iter().map(|e| e.author).collect(),
        codes: examples.iter().map(|e| e.code).collect(),
        histories: examples
            .iter()
            .map(|e| if with_history { e.history.iter().map(|h| (h.author_id, h.code)).collect() } else { Vec::new() })
            .collect(),
        labels,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub examples: usize,
}

/// Trains every parameter jointly on all six tasks with Adam. Without
/// codes the attention feature stays zero and histories are never read.
pub fn train_ranking(
    train: &[QuantizedLogRecord],
    history: &ViewHistory,
    n_users: usize,
    n_authors: usize,
    code_sizes: [usize; 3],
    config: &RankingConfig,
    with_codes: bool,
) -> Result<(RankingModel, TrainReport)> {
    if train.is_empty() {
        return Err(RankingError::EmptyLog);
    }
    let examples = build_examples(train, history, config.history_len);
    let tasks = Task::ALL.to_vec();
    let mut rng = Rng::substream(config.seed, STREAM_INIT);
    let params = RankingParams::init(
        n_users,
        n_authors,
        code_sizes,
        config.dim,
        config.effective_code_dim(),
        config.experts,
        tasks.len(),
        &mut rng,
    );
    let mut model = RankingModel { params, tasks, with_codes };
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..Default::default() });
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        Rng::substream(config.seed, STREAM_SHUFFLE + epoch as u64).shuffle(&mut order);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let rows: Vec<&RankingExample<'_>> = chunk.iter().map(|&i| &examples[i]).collect();
            let batch = make_batch(&rows, &model.tasks, with_codes);
            let (loss, grads) = model.batch_loss(&batch)?;
            if !loss.is_finite() {
                return Err(RankingError::NonFinite(epoch));
            }
            adam.step(&mut model.params, &grads)?;
            total += loss;
            batches += 1;
        }
        epoch_losses.push(total / batches.max(1) as f64);
    }
    Ok((model, TrainReport { epoch_losses, examples: examples.len() }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task: Task,
    pub samples: usize,
    pub positives: usize,
    /// Pooled over all eval exposures; `None` when only one class occurs.
    pub auc: Option<f64>,
    /// `None` when no user has both classes.
    pub gauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub tasks: Vec<TaskMetrics>,
}

impl RankingReport {
    pub fn get(&self, task: Task) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|m| m.task == task)
    }
}

/// Scores every eval exposure and reports per-task AUC and GAUC.
pub fn evaluate_ranking(
    model: &RankingModel,
    eval: &[QuantizedLogRecord],
    history: &ViewHistory,
    history_len: usize,
) -> Result<RankingReport> {
    let examples = build_examples(eval, history, history_len);
    let mut scores = Matrix::zeros(examples.len(), model.tasks.len());
    let refs: Vec<&RankingExample<'_>> = examples.iter().collect();
    for (b, chunk) in refs.chunks(EVAL_BATCH).enumerate() {
        let probs = model.predict(&make_batch(chunk, &model.tasks, model.with_codes))?;
        for i in 0..chunk.len() {
            scores.row_mut(b * EVAL_BATCH + i).copy_from_slice(probs.row(i));
        }
    }
    let users: Vec<u32> = examples.iter().map(|e| e.user).collect();
    let mut tasks = Vec::with_capacity(model.tasks.len());
    for (t, &task) in model.tasks.iter().enumerate() {
        let s: Vec<f64> = (0..examples.len()).map(|i| scores.get(i, t)).collect();
        let y: Vec<bool> = examples.iter().map(|e| e.labels[task.index()]).collect();
        let optional = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(RankingError::SingleClass | RankingError::NoEligibleUsers) => Ok(None),
            Err(e) => Err(e),
        };
        tasks.push(TaskMetrics {
            task,
            samples: y.len(),
            positives: y.iter().filter(|&&v| v).count(),
            auc: optional(auc(&s, &y))?,
            gauc: optional(gauc(&users, &s, &y))?,
        });
    }
    Ok(RankingReport { tasks })
}
