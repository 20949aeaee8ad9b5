use std::fmt;
use std::str::FromStr;

use crate::{CoreError, Result};

/// Minimum watch time, in seconds, for an exposure to count as a valid view.
pub const VALID_VIEW_SECONDS: u32 = 3;

/// The six prediction tasks, in their fixed column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Click,
    LongView,
    EffectiveView,
    Like,
    Comment,
    Gift,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Click,
        Task::LongView,
        Task::EffectiveView,
        Task::Like,
        Task::Comment,
        Task::Gift,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Click => "click",
            Task::LongView => "long_view",
            Task::EffectiveView => "effective_view",
            Task::Like => "like",
            Task::Comment => "comment",
            Task::Gift => "gift",
        }
    }

    /// Short rate name used in reports (CTR, LVTR, ...).
    pub fn rate_name(self) -> &'static str {
        match self {
            Task::Click => "ctr",
            Task::LongView => "lvtr",
            Task::EffectiveView => "etr",
            Task::Like => "ltr",
            Task::Comment => "cmtr",
            Task::Gift => "gtr",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| CoreError::Format(format!("unknown task '{s}'")))
    }
}

/// Binary labels for every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Labels([bool; Task::COUNT]);

impl Labels {
    pub fn new(values: [bool; Task::COUNT]) -> Self {
        Self(values)
    }

    pub fn get(&self, task: Task) -> bool {
        self.0[task.index()]
    }

    pub fn set(&mut self, task: Task, value: bool) {
        self.0[task.index()] = value;
    }

    pub fn as_array(&self) -> [bool; Task::COUNT] {
        self.0
    }

    /// Every engagement label implies a click, and long view implies effective view.
    pub fn is_consistent(&self) -> bool {
        let click = self.get(Task::Click);
        let deeper_needs_click = Task::ALL[1..].iter().all(|&t| !self.get(t) || click);
        deeper_needs_click && (!self.get(Task::LongView) || self.get(Task::EffectiveView))
    }
}

/// One exposure of an author's live window to a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InteractionEvent {
    pub user_id: u32,
    pub author_id: u32,
    pub session_id: u32,
    /// 30-second window index counted from session start.
    pub window_index: u32,
    pub timestamp: u64,
    pub labels: Labels,
    pub watch_seconds: u32,
}

impl InteractionEvent {
    pub fn is_valid_view(&self) -> bool {
        self.watch_seconds >= VALID_VIEW_SECONDS
    }

    pub fn label(&self, task: Task) -> bool {
        self.labels.get(task)
    }

    /// Canonical output order of logs.
    pub fn sort_key(&self) -> (u64, u32, u32) {
        (self.timestamp, self.user_id, self.author_id)
    }

    /// Tab-separated record: ids, timestamp, six labels, watch seconds.
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "{}\t{}\t{}\t{}\t{}",
            self.user_id, self.author_id, self.session_id, self.window_index, self.timestamp
        );
        for v in self.labels.as_array() {
            s.push('\t');
            s.push(if v { '1' } else { '0' });
        }
        s.push('\t');
        s.push_str(&self.watch_seconds.to_string());
        s
    }

    /// Parses a record written by [`InteractionEvent::to_tsv`]. Trailing
    /// columns beyond the event's own are returned untouched.
    pub fn parse_tsv_prefix(line: &str) -> std::result::Result<(Self, Vec<&str>), String> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 12 {
            return Err(format!("expected at least 12 columns, found {}", cols.len()));
        }
        fn num<T: FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} '{s}'"))
        }
        let mut labels = [false; Task::COUNT];
        for (i, slot) in labels.iter_mut().enumerate() {
            *slot = match cols[5 + i] {
                "0" => false,
                "1" => true,
                other => return Err(format!("bad label '{other}'")),
            };
        }
        let event = InteractionEvent {
            user_id: num(cols[0], "user_id")?,
            author_id: num(cols[1], "author_id")?,
            session_id: num(cols[2], "session_id")?,
            window_index: num(cols[3], "window_index")?,
            timestamp: num(cols[4], "timestamp")?,
            labels: Labels(labels),
            watch_seconds: num(cols[11], "watch_seconds")?,
        };
        Ok((event, cols[12..].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event() -> InteractionEvent {
        let mut labels = Labels::default();
        labels.set(Task::Click, true);
        labels.set(Task::Gift, true);
        InteractionEvent {
            user_id: 3,
            author_id: 9,
            session_id: 1,
            window_index: 4,
            timestamp: 120,
            labels,
            watch_seconds: 2,
        }
    }

    #[test]
    fn tsv_column_layout() {
        assert_eq!(event().to_tsv(), "3\t9\t1\t4\t120\t1\t0\t0\t0\t0\t1\t2");
    }

    #[test]
    fn valid_view_threshold() {
        let mut e = event();
        assert!(!e.is_valid_view());
        e.watch_seconds = 3;
        assert!(e.is_valid_view());
    }

    #[test]
    fn hierarchy_check() {
        let mut l = Labels::default();
        assert!(l.is_consistent());
        l.set(Task::Gift, true);
        assert!(!l.is_consistent());
        l.set(Task::Click, true);
        assert!(l.is_consistent());
        l.set(Task::LongView, true);
        assert!(!l.is_consistent());
    }

    #[test]
    fn rejects_short_and_bad_rows() {
        assert!(InteractionEvent::parse_tsv_prefix("1\t2").is_err());
        let bad = "3\t9\t1\t4\t120\t2\t0\t0\t0\t0\t1\t2";
        assert!(InteractionEvent::parse_tsv_prefix(bad).is_err());
    }

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
    }
}
