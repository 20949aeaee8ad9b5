use std::collections::BTreeMap;

use crate::{RankingError, Result};

/// ROC AUC as the Mann-Whitney statistic, with tied scores sharing their
/// average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(RankingError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RankingError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j averaged.
        let rank = (i + 1 + j) as f64 / 2.0;
        pos_rank_sum += rank * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-user AUC averaged with weights proportional to each user's sample
/// count. Users without both classes are skipped and the remaining weights
/// renormalized.
pub fn gauc(users: &[u32], scores: &[f64], labels: &[bool]) -> Result<f64> {
    if users.len() != scores.len() || scores.len() != labels.len() {
        return Err(RankingError::LengthMismatch { scores: scores.len(), labels: labels.len().min(users.len()) });
    }
    let mut groups: BTreeMap<u32, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((&u, &s), &y) in users.iter().zip(scores).zip(labels) {
        let g = groups.entry(u).or_default();
        g.0.push(s);
        g.1.push(y);
    }
    let (mut total, mut weight) = (0.0, 0.0);
    for (s, y) in groups.values() {
        match auc(s, y) {
            Ok(a) => {
                total += s.len() as f64 * a;
                weight += s.len() as f64;
            }
            Err(RankingError::SingleClass) => {}
            Err(e) => return Err(e),
        }
    }
    if weight == 0.0 {
        return Err(RankingError::NoEligibleUsers);
    }
    Ok(total / weight)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
    }

    #[test]
    fn three_of_four_pairs() {
        let a = auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((a - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_tied_is_one_half() {
        assert_eq!(auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_errors() {
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(RankingError::SingleClass)));
        assert!(matches!(auc(&[0.1], &[true, false]), Err(RankingError::LengthMismatch { .. })));
    }

    #[test]
    fn gauc_weighted_example() {
        let users = [1, 1, 2, 2, 2, 2];
        let scores = [0.2, 0.9, 0.1, 0.4, 0.35, 0.8];
        let labels = [false, true, false, false, true, true];
        let g = gauc(&users, &scores, &labels).unwrap();
        assert!((g - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn gauc_skips_single_class_users() {
        let users = [1, 1, 3, 3];
        let g = gauc(&users, &[0.2, 0.9, 0.5, 0.6], &[false, true, true, true]).unwrap();
        assert_eq!(g, 1.0);
        assert!(matches!(gauc(&[1, 2], &[0.1, 0.2], &[true, false]), Err(RankingError::NoEligibleUsers)));
    }
}
