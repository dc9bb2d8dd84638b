use super::*;
use crate::data::{synth_friedman1, synth_smooth_1d, Target};
use crate::proxy_tree::GrowConfig;

fn one_d(xs: &[f64], ys: &[f64]) -> Dataset {
    Dataset::new(
        Matrix::new(xs.len(), 1, xs.to_vec()).unwrap(),
        Target::Regression(ys.to_vec()),
        vec!["x".into()],
    )
    .unwrap()
}

fn tiny_noise(kernel: Kernel) -> GpHyper {
    GpHyper {
        kernel,
        signal_variance: 1.0,
        lengthscale: 1.0,
        noise_variance: 1e-10,
    }
}

#[test]
fn gp_interpolates_single_point() {
    let ds = one_d(&[0.3], &[1.7]);
    let m = GpModel::fit_fixed(&ds, tiny_noise(Kernel::Matern52), true).unwrap();
    let (mean, _) = m.predict(&Matrix::new(1, 1, vec![0.3]).unwrap()).unwrap();
    assert!((mean[0] - 1.7).abs() < 1e-6);
}

#[test]
fn gp_noise_free_reproduces_training_targets() {
    let (ds, _) = synth_smooth_1d(30, 0.0, 4).unwrap();
    let m = ReferenceModel::Gp(
        GpModel::fit_fixed(
            &ds,
            GpHyper {
                lengthscale: 0.3,
                ..tiny_noise(Kernel::Matern52)
            },
            true,
        )
        .unwrap(),
    );
    let s = m.predict_summary(&ds.features).unwrap();
    let y = ds.target.as_regression().unwrap();
    for (a, b) in s.means().unwrap().iter().zip(y) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn gp_variance_reverts_far_from_data() {
    let (ds, _) = synth_smooth_1d(40, 0.1, 2).unwrap();
    let m = fit_gp(&ds, &GpConfig::default()).unwrap();
    let (_, v_train) = m.predict(&ds.features).unwrap();
    let (_, v_far) = m.predict(&Matrix::new(1, 1, vec![25.0]).unwrap()).unwrap();
    let max_train = v_train.iter().copied().fold(0.0, f64::max);
    assert!(v_far[0] >= max_train);
    let floor = m.noise_floor();
    assert!(v_train.iter().all(|v| *v >= floor && v.is_finite()));
}

#[test]
fn gp_mean_is_linear_in_targets() {
    let (ds, _) = synth_smooth_1d(25, 0.1, 9).unwrap();
    let y = ds.target.as_regression().unwrap();
    let doubled = Dataset::new(
        ds.features.clone(),
        Target::Regression(y.iter().map(|v| 2.0 * v).collect()),
        ds.feature_names.clone(),
    )
    .unwrap();
    let hyper = GpHyper {
        kernel: Kernel::Matern52,
        signal_variance: 1.3,
        lengthscale: 0.7,
        noise_variance: 0.01,
    };
    let q = Matrix::new(5, 1, vec![-1.9, -0.4, 0.0, 1.1, 3.0]).unwrap();
    let a = GpModel::fit_fixed(&ds, hyper, false)
        .unwrap()
        .predict(&q)
        .unwrap()
        .0;
    let b = GpModel::fit_fixed(&doubled, hyper, false)
        .unwrap()
        .predict(&q)
        .unwrap()
        .0;
    for (x, y) in a.iter().zip(&b) {
        assert!((2.0 * x - y).abs() < 1e-9 * y.abs().max(1.0));
    }
}

#[test]
fn gp_beats_shallow_tree_on_smooth_truth() {
    let (ds, truth) = synth_smooth_1d(100, 0.1, 1).unwrap();
    let gp = fit_gp(&ds, &GpConfig::default()).unwrap();
    let grid: Vec<f64> = (0..400)
        .map(|i| -2.0 + 4.0 * (i as f64 + 0.5) / 400.0)
        .collect();
    let q = Matrix::new(grid.len(), 1, grid.clone()).unwrap();
    let f: Vec<f64> = grid.iter().map(|&x| truth.eval(x)).collect();
    let rmse = |p: &[f64]| {
        (p.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / f.len() as f64).sqrt()
    };
    let tree = crate::proxy_tree::grow(
        &crate::proxy_tree::FitTargets::from_dataset(&ds).unwrap(),
        &GrowConfig {
            min_leaf: 1,
            max_depth: Some(4),
        },
    )
    .unwrap();
    assert!(rmse(&gp.predict(&q).unwrap().0) < rmse(&tree.predict_mean(&q).unwrap()));
}

#[test]
fn gp_draws_deterministic_and_centered() {
    let (ds, _) = synth_smooth_1d(20, 0.1, 3).unwrap();
    let m = ReferenceModel::Gp(fit_gp(&ds, &GpConfig::default()).unwrap());
    let q = Matrix::new(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
    let a = m.posterior_draws(2, &q, 11).unwrap();
    let b = m.posterior_draws(2, &q, 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
    let many = m.posterior_draws(4000, &q, 5).unwrap();
    let mean = m.predict_summary(&q).unwrap();
    for j in 0..3 {
        let avg = many
            .iter()
            .map(|d| match &d.values {
                DrawValues::Means(v) => v[j],
                DrawValues::Probs(_) => unreachable!(),
            })
            .sum::<f64>()
            / 4000.0;
        assert!((avg - mean.means().unwrap()[j]).abs() < 0.05);
    }
}

#[test]
fn gp_rejects_classification_and_bad_grid() {
    let ds = Dataset::new(
        Matrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        Target::Classification {
            labels: vec![1, 2, 1, 2],
            n_classes: 2,
        },
        vec!["x".into()],
    )
    .unwrap();
    assert!(matches!(
        fit_gp(&ds, &GpConfig::default()),
        Err(Error::TaskMismatch(_))
    ));
    let cfg = GpConfig {
        noise_grid: vec![0.0],
        ..GpConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn gp_round_trip_is_prediction_identical() {
    let ds = synth_friedman1(60, 0.5, 2).unwrap();
    let m = ReferenceModel::Gp(fit_gp(&ds, &GpConfig::default()).unwrap());
    let back = ReferenceModel::from_json(&m.to_json().unwrap()).unwrap();
    let a = m.predict_summary(&ds.features).unwrap();
    let b = back.predict_summary(&ds.features).unwrap();
    assert_eq!(a, b);
    assert_eq!(m.fingerprint().unwrap(), back.fingerprint().unwrap());
}

fn small_ensemble(n_trees: usize, seed: u64) -> (Dataset, EnsembleModel) {
    let ds = synth_friedman1(120, 1.0, seed).unwrap();
    let cfg = EnsembleConfig {
        n_trees,
        bootstrap_seed: seed,
        ..EnsembleConfig::default()
    };
    let m = fit_ensemble(&ds, &cfg).unwrap();
    (ds, m)
}

#[test]
fn ensemble_mean_is_average_of_draws() {
    let (ds, m) = small_ensemble(15, 4);
    let model = ReferenceModel::Ensemble(m);
    let s = model.predict_summary(&ds.features).unwrap();
    let draws = model.posterior_draws(15, &ds.features, 0).unwrap();
    assert_eq!(draws.len(), 15);
    for i in 0..ds.len() {
        let avg = draws
            .iter()
            .map(|d| match &d.values {
                DrawValues::Means(v) => v[i],
                DrawValues::Probs(_) => unreachable!(),
            })
            .sum::<f64>()
            / 15.0;
        assert!((avg - s.means().unwrap()[i]).abs() < 1e-12);
    }
    assert!(matches!(
        model.posterior_draws(16, &ds.features, 0),
        Err(Error::TooManyDraws {
            requested: 16,
            available: 15
        })
    ));
}

#[test]
fn ensemble_single_tree_has_no_spread() {
    let (ds, m) = small_ensemble(1, 8);
    let (_, spread) = m.mean_and_spread(&ds.features).unwrap();
    assert!(spread.iter().all(|v| *v == 0.0));
    let s = ReferenceModel::Ensemble(m.clone())
        .predict_summary(&ds.features)
        .unwrap();
    match s {
        PredictiveSummary::Regression { variances, .. } => {
            assert!(variances.iter().all(|v| *v == m.noise_variance))
        }
        PredictiveSummary::Classification { .. } => unreachable!(),
    }
}

#[test]
fn ensemble_constant_target() {
    let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let ds = one_d(&xs, &[3.5; 20]);
    let m = fit_ensemble(
        &ds,
        &EnsembleConfig {
            n_trees: 7,
            ..EnsembleConfig::default()
        },
    )
    .unwrap();
    assert!(m.trees.iter().all(|t| t.n_leaves() == 1));
    let model = ReferenceModel::Ensemble(m);
    let s = model.predict_summary(&ds.features).unwrap();
    assert!(s.means().unwrap().iter().all(|v| *v == 3.5));
    let d = model.posterior_draws(7, &ds.features, 0).unwrap();
    assert!(d.windows(2).all(|w| w[0].values == w[1].values));
}

#[test]
fn ensemble_mean_permutation_invariant() {
    let (ds, m) = small_ensemble(10, 6);
    let mut rev = m.clone();
    rev.trees.reverse();
    let a = m.mean_and_spread(&ds.features).unwrap().0;
    let b = rev.mean_and_spread(&ds.features).unwrap().0;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn more_trees_predict_better() {
    let ds = synth_friedman1(300, 1.0, 12).unwrap();
    let (train, test) =
        crate::data::split_nonempty(&ds, &crate::data::SplitSpec::new(0.75, 3).unwrap()).unwrap();
    let y = test.target.as_regression().unwrap();
    let rmse = |n_trees| {
        let m = fit_ensemble(
            &train,
            &EnsembleConfig {
                n_trees,
                ..EnsembleConfig::default()
            },
        )
        .unwrap();
        let p = m.mean_and_spread(&test.features).unwrap().0;
        (p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
    };
    assert!(rmse(100) < rmse(3));
}

#[test]
fn classification_ensemble_rows_sum_to_one() {
    let n = 60;
    let xs: Vec<f64> = (0..n * 2).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if xs[2 * i] + xs[2 * i + 1] > 10.0 {
                2
            } else {
                1
            }
        })
        .collect();
    let ds = Dataset::new(
        Matrix::new(n, 2, xs).unwrap(),
        Target::Classification {
            labels,
            n_classes: 2,
        },
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let m = ReferenceModel::Ensemble(
        fit_ensemble(
            &ds,
            &EnsembleConfig {
                n_trees: 20,
                ..EnsembleConfig::default()
            },
        )
        .unwrap(),
    );
    match m.predict_summary(&ds.features).unwrap() {
        PredictiveSummary::Classification { probs } => {
            for row in probs {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|p| *p >= 0.0));
            }
        }
        PredictiveSummary::Regression { .. } => panic!("expected probabilities"),
    }
    let back = ReferenceModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn ensemble_rejects_tiny_data() {
    let ds = one_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
    assert!(fit_ensemble(&ds, &EnsembleConfig::default()).is_err());
}
