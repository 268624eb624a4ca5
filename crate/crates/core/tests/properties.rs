use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{train, TrainConfig};
use contrastive_workbench::workbench::{project_2d, synth_corpus};

fn gaussian_cloud(seed: u64, n: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| scales.iter().map(|s| s * normal.sample(&mut rng) + 0.5).collect())
        .collect()
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    // components are defined up to sign
    (dot.abs() / (na * nb)).min(1.0).acos()
}

#[test]
fn pca_matches_dense_eigendecomposition() {
    for seed in 0..5 {
        let scales = [3.0, 0.4, 2.0, 0.7, 1.1, 0.2];
        let rows = gaussian_cloud(seed, 200, &scales);
        let p = project_2d(&rows, &vec![0; rows.len()]).unwrap();

        let d = scales.len();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] - mean[j]);
        let cov = x.transpose() * &x / n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for k in 0..2 {
            let v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
            let theta = angle(&p.components[k], &v);
            assert!(theta < 1e-4, "seed {seed} component {k}: angle {theta}");
            let lambda = eig.eigenvalues[order[k]];
            assert!((p.variance[k] - lambda).abs() < 1e-6 * lambda);
        }
    }
}

#[test]
fn pca_sign_convention() {
    let rows = gaussian_cloud(9, 50, &[2.0, 1.0, 0.5]);
    let p = project_2d(&rows, &vec![0; 50]).unwrap();
    for c in &p.components {
        let big = c.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        assert!(big > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn projection_is_translation_invariant(
        seed in 0u64..500,
        shift in proptest::collection::vec(-50.0f64..50.0, 4),
    ) {
        let rows = gaussian_cloud(seed, 30, &[2.5, 1.5, 0.6, 0.3]);
        let moved: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&shift).map(|(x, s)| x + s).collect())
            .collect();
        let a = project_2d(&rows, &[0; 30]).unwrap();
        let b = project_2d(&moved, &[0; 30]).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }
}

#[test]
fn disjoint_vocabularies_are_separable() {
    let data = synth_corpus(3, 300, 21, 0.0).unwrap();
    let run = train(&TrainConfig::toy(Method::Ce), &data).unwrap();
    let f1 = run.record.test_macro_f1().unwrap();
    assert!(f1 >= 0.99, "test macro-F1 {f1}");
}

#[test]
fn identical_distributions_sit_at_chance() {
    let mut scores = Vec::new();
    for seed in 0..4 {
        let data = synth_corpus(3, 300, seed, 1.0).unwrap();
        let mut cfg = TrainConfig::toy(Method::Ce);
        cfg.seed = seed;
        cfg.max_epochs = 6;
        scores.push(train(&cfg, &data).unwrap().record.test_macro_f1().unwrap());
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    // chance macro-F1 is at most 1/3 for a balanced 3-class task
    assert!(mean < 0.5, "{scores:?}");
}

#[test]
fn contrastive_losses_fall_over_the_first_three_epochs() {
    let data = synth_corpus(2, 20, 9, 0.0).unwrap();
    for method in Method::ALL.into_iter().filter(|m| m.is_contrastive()) {
        let mut cfg = TrainConfig::toy(method);
        cfg.batch_size = 4;
        cfg.learning_rate = 5e-3;
        cfg.max_epochs = 3;
        cfg.patience = 3;
        let run = train(&cfg, &data).unwrap();
        let losses: Vec<f64> = run.record.epochs.iter().map(|e| e.train.total).collect();
        assert_eq!(losses.len(), 3);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{method}: {losses:?}");
    }
}
