mod common;

use common::{dense_blup, dense_fit, dense_profiled, random_lme_data};
use nalgebra::DMatrix;
use predictability::stats::{fit_lme, heldout_loglik, profiled_loglik, RandomEffectsMode};
use proptest::prelude::*;

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-300)
}

#[test]
fn matches_dense_oracle_on_random_datasets() {
    for seed in 0..24 {
        let d = random_lme_data(seed, 200, 8);
        let fit = fit_lme(&d.x, &d.y, &d.groups).unwrap();
        let (ll, _, beta) = dense_fit(&d.x, &d.y, &d.groups);
        assert!((fit.loglik - ll).abs() <= 1e-6, "seed {seed}: {} vs {ll}", fit.loglik);
        assert!(rel_inf(&fit.beta, &beta) <= 1e-6, "seed {seed}: {:?} vs {beta:?}", fit.beta);
    }
}

#[test]
fn six_observation_hand_dataset() {
    let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.5, 1.0, 1.5, 1.0, -0.2, 1.0, 2.0, 1.0, 0.1, 1.0, 1.1]);
    let y = [3.1, 4.0, 2.2, 6.5, 4.9, 5.8];
    let g = labels(&["a", "a", "a", "b", "b", "b"]);
    let fit = fit_lme(&x, &y, &g).unwrap();
    let (ll, _, beta) = dense_fit(&x, &y, &g);
    assert!((fit.loglik - ll).abs() <= 1e-6);
    assert!(rel_inf(&fit.beta, &beta) <= 1e-6);
}

#[test]
fn grouped_profile_equals_dense_profile() {
    let d = random_lme_data(99, 60, 5);
    for lambda in [0.0, 1e-3, 0.7, 12.0, 4e4] {
        let fast = profiled_loglik(&d.x, &d.y, &d.groups, lambda).unwrap();
        let (ll, beta) = dense_profiled(&d.x, &d.y, &d.groups, lambda);
        assert!((fast.loglik - ll).abs() < 1e-8, "lambda {lambda}");
        assert!(rel_inf(&fast.beta, &beta) < 1e-9);
    }
}

#[test]
fn duplicated_observations() {
    // Doubling every row halves the variance ratio at which a given beta is
    // optimal, so the fitted beta is unchanged exactly when the fitted group
    // variance is zero; at fixed ratios the correspondence is exact.
    let mut zero_variance_cases = 0;
    for seed in 0..8 {
        let d = random_lme_data(seed, 80, 6);
        let n = d.y.len();
        let x2 = DMatrix::from_fn(2 * n, d.x.ncols(), |i, j| d.x[(i % n, j)]);
        let y2: Vec<f64> = d.y.iter().chain(&d.y).copied().collect();
        let g2: Vec<String> = d.groups.iter().chain(&d.groups).cloned().collect();
        for lambda in [0.0, 0.05, 1.0, 30.0] {
            let single = profiled_loglik(&d.x, &d.y, &d.groups, lambda).unwrap();
            let double = profiled_loglik(&x2, &y2, &g2, lambda / 2.0).unwrap();
            assert!(rel_inf(&double.beta, &single.beta) < 1e-10);
        }
        let fit = fit_lme(&d.x, &d.y, &d.groups).unwrap();
        if fit.sigma_b2 == 0.0 {
            zero_variance_cases += 1;
            let fit2 = fit_lme(&x2, &y2, &g2).unwrap();
            assert!(rel_inf(&fit2.beta, &fit.beta) < 1e-10);
        }
    }
    assert!(zero_variance_cases > 0);
}

#[test]
fn heldout_matches_dense_conditional_density() {
    let d = random_lme_data(17, 120, 4);
    let n = d.y.len();
    let train: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
    let test: Vec<usize> = (0..n).filter(|i| i % 3 == 0).collect();
    let pick = |rows: &[usize]| {
        (
            DMatrix::from_fn(rows.len(), d.x.ncols(), |i, j| d.x[(rows[i], j)]),
            rows.iter().map(|&i| d.y[i]).collect::<Vec<_>>(),
            rows.iter().map(|&i| d.groups[i].clone()).collect::<Vec<_>>(),
        )
    };
    let (xt, yt, gt) = pick(&train);
    let (xh, yh, gh) = pick(&test);
    let fit = fit_lme(&xt, &yt, &gt).unwrap();
    let ll = heldout_loglik(&fit, &xh, &yh, &gh, RandomEffectsMode::Conditional);
    for (i, value) in ll.iter().enumerate() {
        let rows: Vec<usize> = (0..yt.len()).filter(|&r| gt[r] == gh[i]).collect();
        let resid: Vec<f64> = rows.iter().map(|&r| yt[r] - fit.fixed_prediction(xt.row(r).iter().copied().collect::<Vec<_>>().as_slice())).collect();
        let b = dense_blup(&resid, fit.lambda);
        let mean = fit.fixed_prediction(xh.row(i).iter().copied().collect::<Vec<_>>().as_slice()) + b;
        let expect = -0.5 * ((2.0 * std::f64::consts::PI * fit.sigma2).ln() + (yh[i] - mean).powi(2) / fit.sigma2);
        assert!((value - expect).abs() < 1e-8);
    }
}

#[test]
fn conditional_minus_marginal_identity() {
    // Evaluated on the training rows: the BLUP-conditional total exceeds the
    // joint marginal log-likelihood by 1/2 sum log(1 + lambda n_g) + sum b_g^2 / (2 sigma_b2).
    let mut checked = 0;
    for seed in 0..12 {
        let d = random_lme_data(seed, 150, 6);
        let fit = fit_lme(&d.x, &d.y, &d.groups).unwrap();
        if fit.sigma_b2 == 0.0 {
            continue;
        }
        checked += 1;
        let cond: f64 = heldout_loglik(&fit, &d.x, &d.y, &d.groups, RandomEffectsMode::Conditional).iter().sum();
        let mut expected = 0.0;
        for (g, b) in &fit.blups {
            let ng = d.groups.iter().filter(|x| *x == g).count() as f64;
            expected += 0.5 * (fit.lambda * ng).ln_1p() + b * b / (2.0 * fit.sigma_b2);
        }
        assert!((cond - fit.loglik - expected).abs() < 1e-6 * fit.loglik.abs(), "seed {seed}");
    }
    assert!(checked >= 3);
}

#[test]
fn conditional_equals_in_sample_without_group_variance() {
    let x = DMatrix::from_row_slice(6, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
    let y = [1.0, 3.0, 2.0, 1.0, 3.0, 2.0];
    let g = labels(&["a", "a", "a", "b", "b", "b"]);
    let fit = fit_lme(&x, &y, &g).unwrap();
    assert_eq!(fit.sigma_b2, 0.0);
    let total: f64 = heldout_loglik(&fit, &x, &y, &g, RandomEffectsMode::Conditional).iter().sum();
    assert!((total - fit.loglik).abs() < 1e-9);
}

#[test]
fn unseen_group_uses_total_variance() {
    let d = random_lme_data(8, 90, 5);
    let fit = fit_lme(&d.x, &d.y, &d.groups).unwrap();
    let row = d.x.rows(0, 1).into_owned();
    let mean = fit.fixed_prediction(row.iter().copied().collect::<Vec<_>>().as_slice());
    let ll = heldout_loglik(&fit, &row, &[mean], &["unseen".to_string()], RandomEffectsMode::Conditional);
    let var = fit.sigma2 + fit.sigma_b2;
    assert!((ll[0] + 0.5 * (2.0 * std::f64::consts::PI * var).ln()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_a_predictor_never_lowers_likelihood(seed in 0u64..10_000) {
        let d = random_lme_data(seed, 120, 6);
        let p = d.x.ncols();
        let smaller = d.x.columns(0, p - 1).into_owned();
        let a = fit_lme(&smaller, &d.y, &d.groups).unwrap();
        let b = fit_lme(&d.x, &d.y, &d.groups).unwrap();
        prop_assert!(b.loglik >= a.loglik - 1e-7 * a.loglik.abs());
    }

    #[test]
    fn column_rescaling_rescales_beta(seed in 0u64..10_000, c in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0]) {
        let d = random_lme_data(seed, 120, 6);
        let mut x = d.x.clone();
        x.column_mut(1).scale_mut(c);
        let a = fit_lme(&d.x, &d.y, &d.groups).unwrap();
        let b = fit_lme(&x, &d.y, &d.groups).unwrap();
        prop_assert!((a.loglik - b.loglik).abs() < 1e-6);
        prop_assert!((b.beta[1] * c - a.beta[1]).abs() <= 1e-6 * a.beta[1].abs().max(1e-3));
    }
}

