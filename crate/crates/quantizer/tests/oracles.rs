use larm_core::{InteractionEvent, Labels, Rng, SemanticCode};
use larm_nnkit::Matrix;
use larm_quantizer::*;
use larm_retrieval::{TwoTowerModel, TwoTowerParams, Variant};
use larm_simgen::{emit_windows, generate_world, WorldConfig};
use proptest::prelude::*;

fn random_matrix(n: usize, d: usize, rng: &mut Rng) -> Matrix {
    Matrix::normal(n, d, 1.0, rng)
}

/// Greedy per-level argmin written without the library's helpers.
fn nested_argmin(x: &[f64], levels: &[Matrix; 3]) -> [u32; 3] {
    let mut r = x.to_vec();
    let mut out = [0u32; 3];
    for (l, c) in levels.iter().enumerate() {
        let mut dists = Vec::new();
        for j in 0..c.rows() {
            let mut s = 0.0;
            for k in 0..r.len() {
                s += (r[k] - c.get(j, k)).powi(2);
            }
            dists.push(s);
        }
        let mut best = 0;
        for j in 1..dists.len() {
            if dists[j] < dists[best] {
                best = j;
            }
        }
        out[l] = best as u32;
        for k in 0..r.len() {
            r[k] -= c.get(best, k);
        }
    }
    out
}

#[test]
fn assign_matches_nested_argmin() {
    let mut rng = Rng::new(11);
    let corpus = random_matrix(400, 6, &mut rng);
    let cb = build_codebooks(&corpus, [8, 4, 2], 50, 11).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..6).map(|_| 1.5 * rng.normal()).collect();
        assert_eq!(assign_codes(&x, &cb).unwrap().as_array(), nested_argmin(&x, &cb.levels));
    }
}

#[test]
fn centroid_with_zero_lower_levels_ties_to_first_index() {
    let c1 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
    let cb = Codebook {
        levels: [c1, Matrix::zeros(3, 2), Matrix::zeros(2, 2)],
        inertia: [0.0; 3],
        level_mse: [0.0; 3],
    };
    assert_eq!(assign_codes(&[0.0, 1.0], &cb).unwrap(), SemanticCode::new(1, 0, 0));
    assert!(matches!(assign_codes(&[0.0], &cb), Err(QuantError::DimensionMismatch { expected: 2, found: 1 })));
}

#[test]
fn build_is_deterministic() {
    let mut rng = Rng::new(5);
    let corpus = random_matrix(300, 8, &mut rng);
    let a = build_codebooks(&corpus, [16, 8, 4], 100, 3).unwrap();
    let b = build_codebooks(&corpus, [16, 8, 4], 100, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_codes_beat_first_level_on_average() {
    let mut rng = Rng::new(21);
    let corpus = random_matrix(500, 4, &mut rng);
    let cb = build_codebooks(&corpus, [10, 5, 3], 100, 2).unwrap();
    let (mut err, mut err1) = (0.0, 0.0);
    for x in corpus.row_iter() {
        let code = assign_codes(x, &cb).unwrap();
        let full = reconstruct(code, &cb).unwrap();
        err += x.iter().zip(full.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let first = cb.levels[0].row(code.c1 as usize);
        err1 += x.iter().zip(first).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    assert!(err < err1, "{err} vs {err1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inertia_never_increases(seed in any::<u64>(), n in 2usize..120, d in 1usize..6, k in 1usize..12) {
        let mut rng = Rng::new(seed);
        let k = k.min(n);
        // Quantized coordinates inject duplicate points and ties.
        let pts = Matrix::new(n, d, (0..n * d).map(|_| (rng.normal() * 2.0).round()).collect()).unwrap();
        let km = kmeans(&pts, k, 100, seed).unwrap();
        for w in km.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", km.inertia_history);
        }
        prop_assert!(km.assignments.iter().all(|&a| a < k));
    }

    #[test]
    fn levels_refine_and_codes_stay_in_bounds(seed in any::<u64>(), n in 30usize..200) {
        let mut rng = Rng::new(seed);
        let corpus = random_matrix(n, 5, &mut rng);
        let sizes = [8, 4, 2];
        let cb = build_codebooks(&corpus, sizes, 50, seed).unwrap();
        prop_assert!(cb.level_mse[2] <= cb.level_mse[1] && cb.level_mse[1] <= cb.level_mse[0]);
        let mse = reconstruction_mse(&corpus, &cb).unwrap();
        prop_assert!(mse[2] <= mse[1] && mse[1] <= mse[0]);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| 10.0 * rng.normal()).collect();
            prop_assert!(assign_codes(&x, &cb).unwrap().check_bounds(sizes).is_ok());
        }
    }
}

fn event(user: u32, author: u32, session: u32, window: u32, ts: u64) -> InteractionEvent {
    InteractionEvent {
        user_id: user,
        author_id: author,
        session_id: session,
        window_index: window,
        timestamp: ts,
        labels: Labels::default(),
        watch_seconds: 0,
    }
}

fn small_world() -> (larm_simgen::World, larm_simgen::WindowStore) {
    let config = WorldConfig {
        n_users: 10,
        n_authors: 12,
        dim: 8,
        sessions_per_author: 2,
        windows_per_session: 3,
        ..Default::default()
    };
    let world = generate_world(&config).unwrap();
    let windows = emit_windows(&world);
    (world, windows)
}

#[test]
fn quantize_log_composes_tower_and_codes() {
    let (_, windows) = small_world();
    let mut rng = Rng::new(4);
    let model = TwoTowerModel {
        params: TwoTowerParams::init(10, 12, 8, None, &mut rng),
        variant: Variant::GatedFusion,
        tau: 0.1,
        normalize: true,
        branch_norm: true,
    };
    let source = CodeSource::Fused(&model);
    let corpus = codebook_corpus(source, &windows, CorpusScope::AllWindows).unwrap();
    let cb = build_codebooks(&corpus, [6, 3, 2], 50, 1).unwrap();

    assert!(quantize_log(&[], &windows, source, &cb).unwrap().is_empty());

    let log = vec![event(0, 3, 1, 2, 10), event(5, 3, 1, 2, 11), event(1, 7, 0, 0, 12)];
    let out = quantize_log(&log, &windows, source, &cb).unwrap();
    let w = windows.get(3, 1, 2).unwrap();
    let (rep, _) = model.item_tower(3, &w.mm_embedding, &w.pooled).unwrap();
    assert_eq!(out[0].code, assign_codes(&rep, &cb).unwrap());
    assert_eq!(out[0].code, out[1].code);
    assert_eq!(out.iter().map(|r| r.event).collect::<Vec<_>>(), log);

    let missing = quantize_log(&[event(0, 3, 9, 0, 1)], &windows, source, &cb);
    assert!(matches!(missing, Err(QuantError::MissingWindow { author: 3, session: 9, .. })));

    let mut buf = Vec::new();
    write_quantized_log(&mut buf, &out).unwrap();
    assert_eq!(read_quantized_log(buf.as_slice()).unwrap(), out);
    assert!(read_quantized_log("1\t2\t3".as_bytes()).is_err());
}

#[test]
fn stats_of_one_author_use_one_bucket_per_level() {
    assert!(code_stats(&[]).is_empty());
    let (_, windows) = small_world();
    let corpus = codebook_corpus(CodeSource::RawMm, &windows, CorpusScope::AllWindows).unwrap();
    let cb = build_codebooks(&corpus, [6, 3, 2], 50, 1).unwrap();
    let log: Vec<_> = (0..5).map(|u| event(u, 4, 0, 1, u as u64)).collect();
    let stats = code_stats(&quantize_log(&log, &windows, CodeSource::RawMm, &cb).unwrap());
    for counts in &stats.level_counts {
        assert_eq!(counts.len(), 1);
    }
}

#[test]
fn shared_prefixes_follow_topics() {
    let config = WorldConfig {
        n_users: 10,
        n_authors: 200,
        n_topics: 4,
        dim: 16,
        sessions_per_author: 1,
        windows_per_session: 2,
        topic_drift: 0.0,
        concentration: 0.02,
        ..Default::default()
    };
    let world = generate_world(&config).unwrap();
    let windows = emit_windows(&world);
    let corpus = codebook_corpus(CodeSource::RawMm, &windows, CorpusScope::AuthorLatest).unwrap();
    let cb = build_codebooks(&corpus, [8, 4, 2], 100, 3).unwrap();
    let log: Vec<_> = (0..200).map(|a| event(0, a, 0, 1, a as u64)).collect();
    let stats = code_stats(&quantize_log(&log, &windows, CodeSource::RawMm, &cb).unwrap());
    let purity = stats.prefix_purity(|a| world.author_main_topic(a as usize));
    assert!(purity > 0.8, "purity {purity}\n{stats}");
}
