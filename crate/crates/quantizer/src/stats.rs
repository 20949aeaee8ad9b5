use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::QuantizedLogRecord;

/// Authors sharing the first two code levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixGroup {
    pub prefix: (u32, u32),
    pub records: usize,
    pub authors: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodeStats {
    /// Record counts per code value at each level.
    pub level_counts: [BTreeMap<u32, usize>; 3],
    /// Groups by `(c1, c2)`, largest author count first.
    pub prefix_groups: Vec<PrefixGroup>,
}

pub fn code_stats(records: &[QuantizedLogRecord]) -> CodeStats {
    let mut stats = CodeStats::default();
    let mut groups: BTreeMap<(u32, u32), (usize, BTreeSet<u32>)> = BTreeMap::new();
    for r in records {
        let c = r.code.as_array();
        for (l, &v) in c.iter().enumerate() {
            *stats.level_counts[l].entry(v).or_default() += 1;
        }
        let g = groups.entry((c[0], c[1])).or_default();
        g.0 += 1;
        g.1.insert(r.event.author_id);
    }
    stats.prefix_groups = groups
        .into_iter()
        .map(|(prefix, (records, authors))| PrefixGroup { prefix, records, authors })
        .collect();
    stats
        .prefix_groups
        .sort_by(|a, b| b.authors.len().cmp(&a.authors.len()).then(b.records.cmp(&a.records)).then(a.prefix.cmp(&b.prefix)));
    stats
}

impl CodeStats {
    pub fn is_empty(&self) -> bool {
        self.prefix_groups.is_empty()
    }

    /// Share of authors whose label matches their prefix group's majority
    /// label, over groups with at least two authors.
    pub fn prefix_purity(&self, label: impl Fn(u32) -> usize) -> f64 {
        let (mut majority, mut total) = (0usize, 0usize);
        for g in self.prefix_groups.iter().filter(|g| g.authors.len() >= 2) {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &a in &g.authors {
                *counts.entry(label(a)).or_default() += 1;
            }
            majority += counts.values().max().copied().unwrap_or(0);
            total += g.authors.len();
        }
        if total == 0 {
            return f64::NAN;
        }
        majority as f64 / total as f64
    }
}

impl fmt::Display for CodeStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, counts) in self.level_counts.iter().enumerate() {
            writeln!(f, "level {}: {} codes used", l + 1, counts.len())?;
        }
        for g in self.prefix_groups.iter().take(10) {
            let authors: Vec<String> = g.authors.iter().take(12).map(|a| a.to_string()).collect();
            let more = if g.authors.len() > 12 { " ..." } else { "" };
            writeln!(
                f,
                "prefix ({},{}): {} records, {} authors [{}{more}]",
                g.prefix.0,
                g.prefix.1,
                g.records,
                g.authors.len(),
                authors.join(" ")
            )?;
        }
        Ok(())
    }
}
