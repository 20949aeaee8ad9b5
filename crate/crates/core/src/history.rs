//! Per-user histories of valid views with the semantic code recorded at
//! exposure time.

use std::collections::HashMap;

use crate::{InteractionEvent, SemanticCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryEntry {
    pub timestamp: u64,
    pub author_id: u32,
    pub code: SemanticCode,
}

/// Valid views grouped by user, each list in ascending timestamp order.
#[derive(Debug, Clone, Default)]
pub struct ViewHistory {
    by_user: HashMap<u32, Vec<HistoryEntry>>,
}

impl ViewHistory {
    /// Collects the valid views (watch time at least three seconds) among `records`.
    pub fn build<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = (&'a InteractionEvent, SemanticCode)>,
    {
        let mut by_user: HashMap<u32, Vec<HistoryEntry>> = HashMap::new();
        for (event, code) in records {
            if event.is_valid_view() {
                by_user.entry(event.user_id).or_default().push(HistoryEntry {
                    timestamp: event.timestamp,
                    author_id: event.author_id,
                    code,
                });
            }
        }
        for list in by_user.values_mut() {
            list.sort_by_key(|e| (e.timestamp, e.author_id));
        }
        Self { by_user }
    }

    /// The most recent `max_len` views of `user` strictly before `timestamp`,
    /// oldest first.
    pub fn before(&self, user: u32, timestamp: u64, max_len: usize) -> &[HistoryEntry] {
        let Some(list) = self.by_user.get(&user) else {
            return &[];
        };
        let end = list.partition_point(|e| e.timestamp < timestamp);
        &list[end.saturating_sub(max_len)..end]
    }

    pub fn users(&self) -> usize {
        self.by_user.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Labels;

    fn view(user: u32, author: u32, t: u64, watch: u32) -> InteractionEvent {
        InteractionEvent {
            user_id: user,
            author_id: author,
            session_id: 0,
            window_index: 0,
            timestamp: t,
            labels: Labels::default(),
            watch_seconds: watch,
        }
    }

    #[test]
    fn strictly_earlier_valid_views_only() {
        let events = vec![view(1, 10, 5, 10), view(1, 11, 7, 1), view(1, 12, 9, 4), view(2, 13, 1, 9)];
        let h = ViewHistory::build(events.iter().map(|e| (e, SemanticCode::new(e.author_id, 0, 0))));
        let got: Vec<u32> = h.before(1, 9, 50).iter().map(|e| e.author_id).collect();
        assert_eq!(got, vec![10]);
        let got: Vec<u32> = h.before(1, 10, 50).iter().map(|e| e.author_id).collect();
        assert_eq!(got, vec![10, 12]);
        assert_eq!(h.before(1, 10, 1)[0].author_id, 12);
        assert!(h.before(3, 100, 50).is_empty());
    }
}
