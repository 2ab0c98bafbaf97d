use aeroflow_core::ml::{train, train_gbm_traced, GbmHyper, Hyper, ModelParams, Node};
use aeroflow_core::{Dataset, TrainedModel};
use aeroflow_oracles::best_split_oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| f64::from(rng.random_range(0..25u8))).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| (r[0] * 0.8 - r[1 % d]).abs() + rng.random_range(0.0..3.0))
        .collect();
    let names = (0..d).map(|i| format!("x{i}")).collect();
    let ds = Dataset::from_rows(names, rows.clone(), y.clone()).unwrap();
    (rows, y, ds)
}

#[test]
fn boosting_never_increases_training_error() {
    for seed in 0..5 {
        let (_, _, ds) = random_dataset(seed, 200, 4);
        let h = GbmHyper { rounds: 60, ..GbmHyper::default() };
        let (_, trace) = train_gbm_traced(&ds, &h, 0).unwrap();
        assert_eq!(trace.sse.len(), 61);
        for w in trace.sse.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn first_split_matches_exhaustive_search() {
    for seed in 0..20 {
        let (rows, y, ds) = random_dataset(100 + seed, 80, 3);
        let h = GbmHyper { rounds: 1, max_depth: 1, shrinkage: 1.0, min_samples_leaf: 5 };
        let m = train(&ds, &Hyper::Gbm(h), 0).unwrap();
        let ModelParams::Gbm { trees, .. } = &m.params else { panic!("gbm params") };
        let expected = best_split_oracle(&rows, &y, 5).expect("a valid split exists");
        match &trees[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, expected.feature, "seed {seed}");
                assert!((threshold - expected.threshold).abs() < 1e-12, "seed {seed}");
            }
            Node::Leaf { .. } => panic!("seed {seed}: expected a split"),
        }
    }
}

#[test]
fn trees_respect_depth_and_leaf_size() {
    let (_, _, ds) = random_dataset(9, 150, 5);
    let h = GbmHyper { rounds: 20, max_depth: 2, shrinkage: 0.3, min_samples_leaf: 10 };
    let m = train(&ds, &Hyper::Gbm(h), 0).unwrap();
    let ModelParams::Gbm { trees, .. } = &m.params else { panic!() };
    assert_eq!(trees.len(), 20);
    for t in trees {
        assert!(t.depth() <= 2);
        assert!(t.leaf_count() <= 4);
    }
}

#[test]
fn ridge_without_penalty_fits_a_plane_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..4).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let w = [1.5, -2.0, 0.25, 3.0];
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 10.0 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let ds = Dataset::from_rows((0..4).map(|i| format!("x{i}")).collect(), rows.clone(), y.clone()).unwrap();
    let m = train(&ds, &Hyper::Ridge { lambda: 0.0 }, 0).unwrap();
    for (r, t) in rows.iter().zip(&y) {
        assert!((m.predict_raw(r).unwrap() - t).abs() < 1e-9);
    }
}

#[test]
fn one_nearest_neighbour_reproduces_training_targets() {
    let (rows, y, _) = random_dataset(5, 60, 3);
    // Deduplicate rows so every point is its own unique nearest neighbour.
    let mut seen = std::collections::HashSet::new();
    let (rows, y): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .zip(y)
        .filter(|(r, _)| seen.insert(r.iter().map(|v| *v as i64).collect::<Vec<_>>()))
        .unzip();
    let ds = Dataset::from_rows((0..3).map(|i| format!("x{i}")).collect(), rows.clone(), y.clone()).unwrap();
    let m = train(&ds, &Hyper::Knn { k: 1 }, 0).unwrap();
    for (r, t) in rows.iter().zip(&y) {
        assert_eq!(m.predict(r).unwrap(), *t);
    }
}

#[test]
fn artifacts_round_trip_for_every_kind() {
    let (rows, _, ds) = random_dataset(21, 60, 3);
    for h in [
        Hyper::Mean,
        Hyper::Ridge { lambda: 0.5 },
        Hyper::Knn { k: 4 },
        Hyper::Gbm(GbmHyper { rounds: 10, ..GbmHyper::default() }),
    ] {
        let m = train(&ds, &h, 7).unwrap();
        let back = TrainedModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m, "{h:?}");
        for r in &rows {
            assert_eq!(back.predict(r).unwrap(), m.predict(r).unwrap());
        }
    }
}

#[test]
fn f32_models_agree_with_f64() {
    let (rows, _, ds) = random_dataset(8, 100, 3);
    let h = Hyper::Gbm(GbmHyper { rounds: 15, ..GbmHyper::default() });
    let a = train(&ds, &h, 0).unwrap();
    let b = train(&ds.cast::<f32>(), &h, 0).unwrap();
    for r in rows.iter().take(20) {
        let x32: Vec<f32> = r.iter().map(|v| *v as f32).collect();
        let pa = a.predict(r).unwrap();
        let pb = f64::from(b.predict(&x32).unwrap());
        assert!((pa - pb).abs() < 1e-3 * pa.abs().max(1.0), "{pa} vs {pb}");
    }
}

#[test]
fn wrong_width_is_rejected() {
    let (_, _, ds) = random_dataset(1, 20, 3);
    let m = train(&ds, &Hyper::Mean, 0).unwrap();
    assert!(m.predict(&[1.0, 2.0]).is_err());
}
