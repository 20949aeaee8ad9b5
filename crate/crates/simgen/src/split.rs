use larm_core::InteractionEvent;

use crate::{Result, SimError};

/// What [`split_log`] does with a log that is not sorted by timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnsortedPolicy {
    Reject,
    Sort,
}

/// Temporal train/eval split.
///
/// The first `floor(fraction * n)` events go to train; the boundary then
/// moves forward past any events sharing the last train timestamp, so every
/// eval timestamp is strictly later than every train timestamp.
pub fn split_log(
    log: &[InteractionEvent],
    fraction: f64,
    policy: UnsortedPolicy,
) -> Result<(Vec<InteractionEvent>, Vec<InteractionEvent>)> {
    let mut events = log.to_vec();
    if let Some(pos) = events.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        match policy {
            UnsortedPolicy::Reject => return Err(SimError::Unsorted(pos + 1)),
            UnsortedPolicy::Sort => events.sort_by_key(InteractionEvent::sort_key),
        }
    }
    let n = events.len();
    let mut cut = ((fraction.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n);
    if cut == 0 {
        return Err(SimError::EmptySplit("train"));
    }
    let last = events[cut - 1].timestamp;
    while cut < n && events[cut].timestamp == last {
        cut += 1;
    }
    if cut == n {
        return Err(SimError::EmptySplit("eval"));
    }
    let eval = events.split_off(cut);
    Ok((events, eval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use larm_core::Labels;

    fn ev(t: u64) -> InteractionEvent {
        InteractionEvent {
            user_id: 0,
            author_id: 0,
            session_id: 0,
            window_index: 0,
            timestamp: t,
            labels: Labels::default(),
            watch_seconds: 0,
        }
    }

    #[test]
    fn eighty_twenty() {
        let log: Vec<_> = (0..10).map(ev).collect();
        let (train, eval) = split_log(&log, 0.8, UnsortedPolicy::Reject).unwrap();
        assert_eq!((train.len(), eval.len()), (8, 2));
    }

    #[test]
    fn degenerate_fractions() {
        let log: Vec<_> = (0..10).map(ev).collect();
        assert_eq!(split_log(&log, 1.0, UnsortedPolicy::Reject).unwrap_err(), SimError::EmptySplit("eval"));
        assert_eq!(split_log(&log, 0.0, UnsortedPolicy::Reject).unwrap_err(), SimError::EmptySplit("train"));
        let same: Vec<_> = (0..5).map(|_| ev(7)).collect();
        assert!(split_log(&same, 0.5, UnsortedPolicy::Reject).is_err());
    }

    #[test]
    fn ties_stay_on_the_train_side() {
        let log: Vec<_> = [1, 2, 2, 2, 3].into_iter().map(ev).collect();
        let (train, eval) = split_log(&log, 0.4, UnsortedPolicy::Reject).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(eval[0].timestamp, 3);
    }

    #[test]
    fn unsorted_rejected_or_sorted() {
        let log: Vec<_> = [3, 1, 2].into_iter().map(ev).collect();
        assert_eq!(split_log(&log, 0.5, UnsortedPolicy::Reject).unwrap_err(), SimError::Unsorted(1));
        let (train, eval) = split_log(&log, 0.5, UnsortedPolicy::Sort).unwrap();
        assert_eq!(train[0].timestamp, 1);
        assert_eq!(eval.last().unwrap().timestamp, 3);
    }
}
