use super::*;
use crate::kernels::{kernel_eval, KernelKind, JITTER};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [KernelKind; 3] = [KernelKind::Rbf, KernelKind::MaternHalf, KernelKind::MaternThreeHalves];

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (FeatureMatrix, Vec<f64>) {
    let v = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    (FeatureMatrix::from_vec(n, d, v).unwrap(), y)
}

fn random_spec(rng: &mut ChaCha8Rng) -> KernelSpec {
    let kind = KINDS[rng.random_range(0..3)];
    KernelSpec::with_params(
        kind,
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
        rng.random_range(1e-3..0.3),
    )
    .unwrap()
}

/// Dense noisy training matrix and its explicit inverse, built pairwise.
fn explicit_inverse(spec: &KernelSpec, x: &FeatureMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let v = kernel_eval(spec, x.row(i), x.row(j)).unwrap();
        if i == j { v + spec.noise_variance + JITTER } else { v }
    });
    let inv = k.clone().try_inverse().unwrap();
    (k, inv)
}

fn no_opt() -> FitOptions {
    FitOptions { optimize: false, restarts: 0 }
}

#[test]
fn lml_single_sample_collapses() {
    let spec = KernelSpec::with_params(KernelKind::Rbf, 1.0, 1.0, 1e-5).unwrap();
    let x = FeatureMatrix::from_rows(&[vec![0.4]]).unwrap();
    let (value, _) = log_marginal_likelihood(&spec, &x, &[0.0]).unwrap();
    let l11 = (1.0 + 1e-5 + JITTER).sqrt();
    let expect = -l11.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((value - expect).abs() < 1e-14);
}

#[test]
fn lml_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..10 {
        let (x, y) = random_problem(&mut rng, 4, 2);
        let spec = random_spec(&mut rng);
        let (k, inv) = explicit_inverse(&spec, &x);
        let yv = DVector::from_vec(y.clone());
        let expect = -0.5 * (yv.transpose() * &inv * &yv)[(0, 0)]
            - 0.5 * k.determinant().ln()
            - 2.0 * (2.0 * std::f64::consts::PI).ln();
        let (value, _) = log_marginal_likelihood(&spec, &x, &y).unwrap();
        assert!((value - expect).abs() < 1e-10, "{value} vs {expect}");
    }
}

#[test]
fn lml_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-6;
    for n in 2..=8 {
        let (x, y) = random_problem(&mut rng, n, 2);
        let spec = random_spec(&mut rng);
        let (_, grad) = log_marginal_likelihood(&spec, &x, &y).unwrap();
        let theta = spec.log_params();
        for p in 0..3 {
            let at = |delta: f64| {
                let mut t = theta;
                t[p] += delta;
                log_marginal_likelihood(&spec.with_log_params(t), &x, &y).unwrap().0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let rel = (grad[p] - fd).abs() / grad[p].abs().max(1e-3);
            assert!(rel < 1e-5, "n={n} p={p}: {} vs {fd}", grad[p]);
        }
    }
}

#[test]
fn lml_rejects_mismatch() {
    let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
    let spec = KernelSpec::new(KernelKind::Rbf);
    assert!(matches!(log_marginal_likelihood(&spec, &x, &[1.0]), Err(GpError::LengthMismatch { .. })));
}

#[test]
fn predict_matches_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..10 {
        let (x, y) = random_problem(&mut rng, 5, 3);
        let (q, _) = random_problem(&mut rng, 3, 3);
        let spec = random_spec(&mut rng);
        let model = fit(&x, &y, &spec, &no_opt(), &mut rng).unwrap();
        let (_, inv) = explicit_inverse(&spec, &x);
        let (m, s) = standardization(&y);
        let ys = DVector::from_iterator(5, y.iter().map(|v| (v - m) / s));
        let preds = model.predict(&q).unwrap();
        for (qi, p) in q.rows().zip(&preds) {
            let ks = DVector::from_iterator(5, x.rows().map(|xi| kernel_eval(&spec, xi, qi).unwrap()));
            let mean = m + s * ks.dot(&(&inv * &ys));
            let var = spec.signal_variance + spec.noise_variance - ks.dot(&(&inv * &ks));
            assert!((p.mean - mean).abs() < 1e-8);
            assert!((p.std - s * var.max(0.0).sqrt()).abs() < 1e-8);
        }
    }
}

#[test]
fn interpolates_training_targets_at_low_noise() {
    let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
    let y = [2.0, -1.0];
    let spec = KernelSpec::with_params(KernelKind::Rbf, 1.0, 1.0, 1e-10).unwrap();
    let model = fit(&x, &y, &spec, &no_opt(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for (p, t) in model.predict(&x).unwrap().iter().zip(y) {
        assert!((p.mean - t).abs() <= 1e-3);
        assert!(p.std <= 1e-3 * model.target_std());
    }
}

#[test]
fn constant_targets_trigger_std_guard() {
    let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.5], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let y = [5.0; 5];
    let model = fit(&x, &y, &KernelSpec::new(KernelKind::Rbf), &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    assert_eq!(model.target_std(), 1.0);
    let q = FeatureMatrix::from_rows(&[vec![-4.0], vec![0.25], vec![10.0]]).unwrap();
    for p in model.predict(&q).unwrap() {
        assert!((p.mean - 5.0).abs() <= 1e-6);
    }
}

#[test]
fn far_query_reverts_to_prior() {
    let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.3], vec![0.9]]).unwrap();
    let y = [1.0, 2.0, 0.5];
    let spec = KernelSpec::with_params(KernelKind::Rbf, 1.4, 0.2, 1e-4).unwrap();
    let model = fit(&x, &y, &spec, &no_opt(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let p = model.predict_one(&[1e3]).unwrap();
    assert!((p.mean - model.target_mean()).abs() < 1e-6);
    let prior = model.target_std() * (1.4f64 + 1e-4).sqrt();
    assert!((p.std - prior).abs() < 1e-6);
}

#[test]
fn predict_dimension_mismatch() {
    let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
    let model = fit(&x, &[1.0], &KernelSpec::new(KernelKind::Rbf), &no_opt(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(model.predict_one(&[1.0]).is_err());
}

#[test]
fn factor_and_dual_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let (x, y) = random_problem(&mut rng, 7, 2);
    let model = fit(&x, &y, &KernelSpec::new(KernelKind::MaternThreeHalves), &FitOptions::default(), &mut rng).unwrap();
    let k = kernels::noisy_kernel_matrix(model.spec(), &x);
    let rebuilt = model.chol() * model.chol().transpose();
    assert!((&rebuilt - &k).norm() / k.norm() < 1e-8);
    let residual = &k * model.dual() - DVector::from_column_slice(model.train_targets_std());
    assert!(residual.norm() < 1e-8 * (1.0 + model.dual().norm()));
}

#[test]
fn optimized_fit_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let (x, y) = random_problem(&mut rng, 12, 2);
    let spec = KernelSpec::new(KernelKind::Rbf);
    let opts = FitOptions { optimize: true, restarts: 0 };
    let a = fit(&x, &y, &spec, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let b = fit(&x, &y, &spec, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(a.spec().log_params().map(f64::to_bits), b.spec().log_params().map(f64::to_bits));
    let with_restarts = FitOptions { optimize: true, restarts: 3 };
    let c = fit(&x, &y, &spec, &with_restarts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let d = fit(&x, &y, &spec, &with_restarts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(c.spec(), d.spec());
    assert!(c.lml() >= a.lml() - 1e-9);
}

#[test]
fn optimization_improves_likelihood() {
    let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.3]).collect();
    let y: Vec<f64> = xs.iter().map(|r| (r[0]).sin()).collect();
    let x = FeatureMatrix::from_rows(&xs).unwrap();
    let spec = KernelSpec::with_params(KernelKind::Rbf, 1.0, 0.01, 1.0).unwrap();
    let fixed = fit(&x, &y, &spec, &no_opt(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let tuned = fit(&x, &y, &spec, &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(tuned.lml() > fixed.lml() + 10.0);
    assert!(tuned.spec().length_scale > 0.3);
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let (x, y) = random_problem(&mut rng, 6, 2);
    let model = fit(&x, &y, &KernelSpec::new(KernelKind::MaternHalf), &FitOptions::default(), &mut rng)
        .unwrap()
        .with_train_indices(vec![10, 3, 7, 1, 0, 42]);
    let path = dir.path().join("m.json");
    snapshot_save(&model, &path).unwrap();
    let back = snapshot_load(&path).unwrap();
    assert_eq!(back.spec(), model.spec());
    assert_eq!(back.train_indices(), model.train_indices());
    assert_eq!(back.target_mean().to_bits(), model.target_mean().to_bits());
    assert_eq!(back.target_std().to_bits(), model.target_std().to_bits());
    let (q, _) = random_problem(&mut rng, 10, 2);
    for (a, b) in model.predict(&q).unwrap().iter().zip(back.predict(&q).unwrap()) {
        assert!((a.mean - b.mean).abs() < 1e-10 && (a.std - b.std).abs() < 1e-10);
    }
}

#[test]
fn snapshot_single_sample() {
    let dir = tempfile::tempdir().unwrap();
    let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let model = fit(&x, &[3.5], &KernelSpec::new(KernelKind::Rbf), &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    let path = dir.path().join("one.json");
    snapshot_save(&model, &path).unwrap();
    let back = snapshot_load(&path).unwrap();
    assert_eq!(back.train_targets(), &[3.5]);
}

#[test]
fn snapshot_validation() {
    let missing_kernel = r#"{"format_version":1,"train_indices":[0],"train_features":[[0.0]],
        "train_targets":[1.0],"target_mean":1.0,"target_std":1.0}"#;
    assert!(matches!(snapshot::snapshot_from_str(missing_kernel), Err(GpError::Snapshot(_))));
    let wrong_version = r#"{"format_version":9,"kernel":{"kind":"rbf","signal_variance":1.0,
        "length_scale":1.0,"noise_variance":1e-5},"train_indices":[0],"train_features":[[0.0]],
        "train_targets":[1.0],"target_mean":1.0,"target_std":1.0}"#;
    assert!(matches!(snapshot::snapshot_from_str(wrong_version), Err(GpError::Snapshot(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn optimizer_respects_bounds(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_problem(&mut rng, n, 2);
        let mut spec = KernelSpec::new(KINDS[(seed % 3) as usize]);
        spec.length_bounds = kernels::Bounds::new(0.5, 2.0);
        spec.noise_bounds = kernels::Bounds::new(1e-4, 1e-2);
        spec.noise_variance = 1e-3;
        let model = fit(&x, &y, &spec, &FitOptions { optimize: true, restarts: 2 }, &mut rng).unwrap();
        let s = model.spec();
        prop_assert!(s.signal_bounds.contains(s.signal_variance));
        prop_assert!(s.length_bounds.contains(s.length_scale));
        prop_assert!(s.noise_bounds.contains(s.noise_variance));
    }

    #[test]
    fn adding_point_at_query_never_raises_variance(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_problem(&mut rng, n + 1, 2);
        let spec = random_spec(&mut rng);
        let q = x.row(n).to_vec();
        let small = x.select(&(0..n).collect::<Vec<_>>()).unwrap();
        // Same standardization for both models keeps variances comparable.
        let before = GpModel::assemble(spec, (0..n).collect(), small, y[..n].to_vec(), 0.0, 1.0).unwrap();
        let after = GpModel::assemble(spec, (0..=n).collect(), x.clone(), y.clone(), 0.0, 1.0).unwrap();
        let vb = before.predict_one(&q).unwrap().std;
        let va = after.predict_one(&q).unwrap().std;
        prop_assert!(va <= vb + 1e-9);
    }
}
