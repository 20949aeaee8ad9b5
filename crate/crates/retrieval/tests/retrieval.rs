use std::collections::BTreeSet;

use larm_core::{InteractionEvent, Rng};
use larm_nnkit::Matrix;
use larm_retrieval::*;
use larm_simgen::{emit_windows, generate_world, simulate_interactions, split_log, UnsortedPolicy, WindowStore, WorldConfig};
use proptest::prelude::*;

fn brute_topk(index: &AuthorIndex, q: &[f64], k: usize) -> Vec<u32> {
    let qn = if index.normalized { q.iter().map(|x| x * x).sum::<f64>().sqrt() } else { 1.0 };
    let mut all: Vec<(f64, u32)> = (0..index.len())
        .map(|i| (index.rows.row(i).iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / qn, index.author_ids[i]))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, id)| id).collect()
}

#[test]
fn topk_matches_full_sort() {
    let mut rng = Rng::new(3);
    for normalized in [false, true] {
        let mut rows = Matrix::normal(200, 16, 1.0, &mut rng);
        // Duplicate rows force score ties.
        for i in 0..20 {
            let src = rows.row(i).to_vec();
            rows.row_mut(100 + i).copy_from_slice(&src);
        }
        if normalized {
            for i in 0..rows.rows() {
                let n = rows.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                rows.row_mut(i).iter_mut().for_each(|x| *x /= n);
            }
        }
        let index = AuthorIndex { rows, normalized, author_ids: (0..200).collect() };
        for _ in 0..50 {
            let q: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
            assert_eq!(retrieve_topk(&index, &q, 50).unwrap(), brute_topk(&index, &q, 50));
        }
        assert!(retrieve_topk(&index, &[0.0; 16], 201).is_err());
    }
}

proptest! {
    #[test]
    fn hit_rate_matches_set_oracle(
        p in proptest::collection::btree_set(0u32..500, 1..=37),
        r in proptest::sample::subsequence((0u32..500).collect::<Vec<_>>(), 100).prop_shuffle(),
    ) {
        let rs: BTreeSet<u32> = r.iter().copied().collect();
        let inter = p.intersection(&rs).count() as f64;
        let lit = hit_rate(&p, &r, HitRateDenominator::Precision).unwrap();
        let rec = hit_rate(&p, &r, HitRateDenominator::Recall).unwrap();
        prop_assert_eq!(lit, inter / 100.0);
        prop_assert_eq!(rec, inter / p.len() as f64);
        prop_assert!((0.0..=1.0).contains(&lit) && (0.0..=1.0).contains(&rec));
    }
}

#[test]
fn empty_sets_are_errors() {
    let p: BTreeSet<u32> = [1].into();
    assert!(matches!(hit_rate(&p, &[], HitRateDenominator::Precision), Err(RetrievalError::EmptyR)));
    assert!(matches!(hit_rate(&BTreeSet::new(), &[1], HitRateDenominator::Recall), Err(RetrievalError::EmptyP)));
    assert_eq!(hit_rate(&BTreeSet::new(), &[1], HitRateDenominator::Precision).unwrap(), 0.0);
}

fn small_run(seed: u64) -> (WorldConfig, WindowStore, Vec<InteractionEvent>, Vec<InteractionEvent>) {
    let config = WorldConfig {
        n_users: 300,
        n_authors: 60,
        dim: 8,
        sessions_per_author: 2,
        windows_per_session: 4,
        exposures_per_user: 20,
        seed,
        ..Default::default()
    };
    let world = generate_world(&config).unwrap();
    let windows = emit_windows(&world);
    let (log, _) = simulate_interactions(&world, &windows).unwrap();
    let (train, eval) = split_log(&log, 0.75, UnsortedPolicy::Reject).unwrap();
    (config, windows, train, eval)
}

fn fixed_epochs(epochs: usize) -> RetrievalConfig {
    RetrievalConfig {
        epochs,
        val_fraction: 0.0,
        batch_size: 64,
        ..Default::default()
    }
}

#[test]
fn training_is_deterministic() {
    let (wc, windows, train, _) = small_run(7);
    let config = RetrievalConfig { epochs: 3, batch_size: 64, ..Default::default() };
    let (a, ra) = train_retrieval(&train, &windows, wc.n_users, None, &config).unwrap();
    let (b, rb) = train_retrieval(&train, &windows, wc.n_users, None, &config).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(ra, rb);
    let best = ra.val_hit_rates[ra.best_epoch];
    assert!(ra.val_hit_rates.iter().all(|&v| v <= best));
    assert!(ra.val_hit_rates[..ra.best_epoch].iter().all(|&v| v < best));
    let (c, _) = train_retrieval(&train, &windows, wc.n_users, None, &RetrievalConfig { seed: 2, ..config }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn loss_falls_for_every_variant() {
    let (wc, windows, train, _) = small_run(8);
    for variant in [Variant::IdOnly, Variant::LlmOnly, Variant::GatedFusion] {
        let config = RetrievalConfig { variant, ..fixed_epochs(3) };
        let (_, report) = train_retrieval(&train, &windows, wc.n_users, None, &config).unwrap();
        assert_eq!(report.epoch_losses.len(), 3);
        assert!(report.val_hit_rates.is_empty());
        assert!(report.epoch_losses[2] < report.epoch_losses[0], "{variant:?}: {:?}", report.epoch_losses);
    }
}

#[test]
fn index_rows_match_standalone_item_tower() {
    let (wc, windows, train, eval) = small_run(9);
    let (model, report) = train_retrieval(&train, &windows, wc.n_users, None, &fixed_epochs(2)).unwrap();
    let index = build_index(&model, &windows).unwrap();
    assert_eq!(index.len(), wc.n_authors);
    for a in 0..wc.n_authors as u32 {
        let w = windows.latest(a).unwrap();
        let (rep, lambda) = model.item_tower(a, &w.mm_embedding, &w.pooled).unwrap();
        let norm = rep.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (x, y) in index.rows.row(a as usize).iter().zip(rep.iter()) {
            assert!((x - y / norm).abs() < 1e-12);
        }
        assert!((lambda - model.author_lambdas()[a as usize]).abs() < 1e-12);
    }

    let g = report.gate_stats;
    assert!(g.mean > 0.0 && g.mean < 1.0);
    assert!(g.p10 <= g.p50 && g.p50 <= g.p90);

    let h = evaluate_hit_rate(&model, &index, &eval, None, 50, 10).unwrap();
    assert!(h.users > 0);
    assert!((0.0..=1.0).contains(&h.precision) && (0.0..=1.0).contains(&h.recall));
}
