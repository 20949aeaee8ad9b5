use larm_core::{InteractionEvent, Labels, Rng, Task};

use crate::world::World;
use crate::{Result, SimError, WindowStore, WINDOW_SECONDS};

const STREAM_EXPOSURES: u64 = 1 << 40;
const STREAM_LABELS: u64 = 1 << 41;

/// Per-task logit offsets found by bisection so that the expected marginal
/// rate of every task matches its configured base rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub bias: [f64; Task::COUNT],
}

impl Calibration {
    pub fn bias(&self, task: Task) -> f64 {
        self.bias[task.index()]
    }
}

#[derive(Debug, Clone, Copy)]
struct Exposure {
    user: u32,
    author: u32,
    session: u32,
    window: u32,
    timestamp: u64,
}

/// Bias-free part of the label logit shared by all tasks.
fn signal(world: &World, user: usize, author: usize, session: usize) -> f64 {
    let c = &world.config;
    c.affinity_weight * world.affinity(user, author, session) + c.style_weight * world.style_match(user, author)
}

/// Click logit including the calibrated bias.
pub fn true_click_logit(world: &World, cal: &Calibration, user: u32, author: u32, session: u32) -> f64 {
    signal(world, user as usize, author as usize, session as usize) + cal.bias(Task::Click)
}

/// Finds `b` with `mean_i weight_i * sigmoid(x_i + b) = target` by bisection.
pub fn calibrate_bias(signals: &[f64], weights: &[f64], target: f64) -> f64 {
    let rate = |b: f64| {
        signals
            .iter()
            .zip(weights)
            .map(|(x, w)| w * sigmoid(x + b))
            .sum::<f64>()
            / signals.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sample_exposures(world: &World) -> Vec<Exposure> {
    let c = &world.config;
    let mut cumulative = Vec::with_capacity(c.n_authors);
    let mut acc = 0.0;
    for &p in &world.author_popularity {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(c.n_users * c.exposures_per_user);
    for user in 0..c.n_users {
        let mut rng = Rng::substream(c.seed, STREAM_EXPOSURES + user as u64);
        for _ in 0..c.exposures_per_user {
            let session = rng.below(c.sessions_per_author);
            let author = if rng.uniform() < c.popularity_share {
                let r = rng.uniform() * total;
                cumulative.partition_point(|&x| x <= r).min(c.n_authors - 1)
            } else {
                rng.below(c.n_authors)
            };
            // The user joins the session at a random window and watches a
            // contiguous stretch from there.
            let window = rng.below(c.windows_per_session);
            let timestamp = c.session_start(session) + window as u64 * WINDOW_SECONDS + rng.below(WINDOW_SECONDS as usize) as u64;
            out.push(Exposure {
                user: user as u32,
                author: author as u32,
                session: session as u32,
                window: window as u32,
                timestamp,
            });
        }
    }
    out
}

/// Calibrates task biases on a set of exposure signals.
fn calibrate(world: &World, signals: &[f64]) -> Calibration {
    let rates = world.config.base_rates;
    let mut bias = [0.0; Task::COUNT];
    let ones = vec![1.0; signals.len()];
    bias[Task::Click.index()] = calibrate_bias(signals, &ones, rates.get(Task::Click));
    let p_click: Vec<f64> = signals.iter().map(|x| sigmoid(x + bias[Task::Click.index()])).collect();
    for task in [Task::EffectiveView, Task::Like, Task::Comment, Task::Gift] {
        bias[task.index()] = calibrate_bias(signals, &p_click, rates.get(task));
    }
    let p_effective: Vec<f64> = signals
        .iter()
        .zip(&p_click)
        .map(|(x, pc)| pc * sigmoid(x + bias[Task::EffectiveView.index()]))
        .collect();
    bias[Task::LongView.index()] = calibrate_bias(signals, &p_effective, rates.get(Task::LongView));
    Calibration { bias }
}

/// Samples exposures for every user and draws hierarchical labels.
///
/// Click probability is `sigmoid(affinity_weight * affinity + style_weight *
/// style + b_click)`. Effective view is conditional on click, long view on
/// effective view, and like/comment/gift on click, each with the same signal
/// and its own calibrated bias. Watch time is drawn to agree with the
/// labels: long view iff `watch >= long_view_seconds`, effective view iff
/// `watch >= effective_view_seconds`. The returned log is sorted by
/// `(timestamp, user_id, author_id)`.
pub fn simulate_interactions(world: &World, windows: &WindowStore) -> Result<(Vec<InteractionEvent>, Calibration)> {
    if windows.is_empty() {
        return Err(SimError::NoWindows);
    }
    let c = &world.config;
    let exposures = sample_exposures(world);
    let signals: Vec<f64> = exposures
        .iter()
        .map(|e| signal(world, e.user as usize, e.author as usize, e.session as usize))
        .collect();
    let cal = calibrate(world, &signals);

    let mut events = Vec::with_capacity(exposures.len());
    let per_user = c.exposures_per_user;
    for (user, chunk) in exposures.chunks(per_user).enumerate() {
        let mut rng = Rng::substream(c.seed, STREAM_LABELS + user as u64);
        for (k, e) in chunk.iter().enumerate() {
            let x = signals[user * per_user + k];
            let p = |t: Task| sigmoid(x + cal.bias(t));
            let mut labels = Labels::default();
            let click = rng.bernoulli(p(Task::Click));
            // Draw every coin unconditionally so the stream position does
            // not depend on earlier outcomes.
            let coins: Vec<f64> = (0..Task::COUNT - 1).map(|_| rng.uniform()).collect();
            if click {
                labels.set(Task::Click, true);
                let effective = coins[0] < p(Task::EffectiveView);
                labels.set(Task::EffectiveView, effective);
                labels.set(Task::LongView, effective && coins[1] < p(Task::LongView));
                labels.set(Task::Like, coins[2] < p(Task::Like));
                labels.set(Task::Comment, coins[3] < p(Task::Comment));
                labels.set(Task::Gift, coins[4] < p(Task::Gift));
            }
            let u = rng.uniform();
            let watch_seconds = if !click {
                0
            } else if labels.get(Task::LongView) {
                let lo = c.long_view_seconds as f64;
                (lo + u * 4.0 * lo) as u32
            } else if labels.get(Task::EffectiveView) {
                let (lo, hi) = (c.effective_view_seconds as f64, c.long_view_seconds as f64);
                ((lo + u * (hi - lo)) as u32).min(c.long_view_seconds - 1)
            } else {
                ((u * c.effective_view_seconds as f64) as u32).min(c.effective_view_seconds - 1)
            };
            events.push(InteractionEvent {
                user_id: e.user,
                author_id: e.author,
                session_id: e.session,
                window_index: e.window,
                timestamp: e.timestamp,
                labels,
                watch_seconds,
            });
        }
    }
    events.sort_by_key(|e| (e.timestamp, e.user_id, e.author_id, e.session_id, e.window_index));
    Ok((events, cal))
}
