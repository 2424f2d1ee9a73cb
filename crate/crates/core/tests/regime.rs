mod common;

use common::*;
use optregime::regime::{decide, fit_contrast, residualize, StagePenalty};
use optregime::{
    fit_regime, Dataset, DesignMatrix, Error, PenaltyFamily, PhiMode, PropensityMode, RegimeOptions,
};
use proptest::prelude::*;
use rand::Rng;

fn fixed_options(lambda: f64) -> RegimeOptions {
    RegimeOptions {
        propensity_penalty: StagePenalty::fixed(PenaltyFamily::Scad, lambda),
        outcome_penalty: StagePenalty::fixed(PenaltyFamily::Scad, lambda),
        contrast_penalty: StagePenalty::fixed(PenaltyFamily::Scad, lambda),
        ..RegimeOptions::default()
    }
}

#[test]
fn decide_examples() {
    assert_eq!(decide(&[1.0, -1.0], &[2.0, 1.0]).unwrap(), 1);
    assert_eq!(decide(&[1.0, -1.0], &[1.0, 1.0]).unwrap(), 0);
    assert_eq!(decide(&[0.0, 0.0], &[3.0, -7.0]).unwrap(), 0);
    assert!(matches!(decide(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
}

#[test]
fn residualize_examples() {
    let x = DesignMatrix::with_intercept(3, 1, &[2.0, -1.0, 0.5]).unwrap();
    let a = vec![1.0, 0.0, 1.0];
    let data = Dataset::new(vec![3.0, 1.0, -2.0], a.clone(), x.clone()).unwrap();

    let (z, r) = residualize(&data, &a, &[0.0; 3]).unwrap();
    assert!(z.column_major().iter().all(|v| *v == 0.0));
    assert_eq!(r, vec![3.0, 1.0, -2.0]);

    let (z, _) = residualize(&data, &[0.5; 3], &[0.0; 3]).unwrap();
    for i in 0..3 {
        let sign = if a[i] == 1.0 { 0.5 } else { -0.5 };
        assert_eq!(z.row(i), x.row(i).iter().map(|v| sign * v).collect::<Vec<_>>());
    }
    assert!(!z.has_intercept() && !z.is_penalized(0));
    assert!(!z.is_standardized());

    let one = Dataset::new(vec![4.0], vec![1.0], DesignMatrix::with_intercept(1, 2, &[3.0, -2.0]).unwrap()).unwrap();
    let (z, r) = residualize(&one, &[0.25], &[1.5]).unwrap();
    assert_eq!(z.row(0), vec![0.75, 2.25, -1.5]);
    assert_eq!(r, vec![2.5]);
}

#[test]
fn zero_response_gives_zero_contrast() {
    let mut r = rng(21);
    let x = gaussian_design(&mut r, 60, 5).standardize();
    let a = coin_flips(&mut r, 60);
    let data = Dataset::new(vec![0.0; 60], a, x).unwrap();
    let est = fit_regime(&data, &RegimeOptions::default(), &PropensityMode::SampleProportion, PhiMode::Linear).unwrap();
    assert_eq!(est.beta(), &[0.0; 6]);
}

#[test]
fn unpenalized_contrast_matches_ols_on_transformed_design() {
    let mut r = rng(22);
    let n = 200;
    let x = gaussian_design(&mut r, n, 1);
    let a = coin_flips(&mut r, n);
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.3 * x.get(i, 1) + a[i] * (0.5 - x.get(i, 1)) + r.random_range(-1.0..1.0))
        .collect();
    let data = Dataset::new(y.clone(), a.clone(), x.clone()).unwrap();
    let mut opts = fixed_options(0.0);
    opts.solver.tolerance = 1e-12;
    let est = fit_regime(&data, &opts, &PropensityMode::Known(vec![0.5; n]), PhiMode::Zero).unwrap();
    let z = x.scale_rows(&a.iter().map(|v| v - 0.5).collect::<Vec<_>>()).unwrap();
    assert!(max_abs_diff(est.beta(), &ols(&z, &y)) < 1e-8);
    assert!(est.alpha_hat.is_none() && est.theta_hat.is_none());
}

#[test]
fn sample_proportion_mode_uses_treated_share() {
    let mut r = rng(23);
    let x = gaussian_design(&mut r, 50, 4).standardize();
    let a = coin_flips(&mut r, 50);
    let share = a.iter().sum::<f64>() / 50.0;
    let data = Dataset::new(normals(&mut r, 50), a, x).unwrap();
    let est = fit_regime(&data, &fixed_options(0.1), &PropensityMode::SampleProportion, PhiMode::Linear).unwrap();
    assert!(est.pi_hat.iter().all(|p| *p == share));
}

#[test]
fn known_mode_equals_sample_proportion_at_matching_share() {
    let mut r = rng(24);
    let x = gaussian_design(&mut r, 40, 6).standardize();
    let a: Vec<f64> = (0..40).map(|i| f64::from(u8::from(i % 4 == 0))).collect();
    let data = Dataset::new(normals(&mut r, 40), a, x).unwrap();
    let opts = RegimeOptions { cv_folds: 4, ..RegimeOptions::default() };
    let known = fit_regime(&data, &opts, &PropensityMode::Known(vec![0.25; 40]), PhiMode::Linear).unwrap();
    let prop = fit_regime(&data, &opts, &PropensityMode::SampleProportion, PhiMode::Linear).unwrap();
    assert_eq!(known.beta_hat, prop.beta_hat);
    assert_eq!(known.pi_hat, prop.pi_hat);
}

#[test]
fn known_propensity_outside_unit_interval_rejected() {
    let x = DesignMatrix::with_intercept(3, 0, &[]).unwrap();
    let data = Dataset::new(vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 1.0], x).unwrap();
    let err = fit_regime(&data, &fixed_options(0.1), &PropensityMode::Known(vec![0.5, 1.0, 0.5]), PhiMode::Zero);
    assert!(matches!(err, Err(Error::Domain(_))));
}

#[test]
fn estimated_propensities_are_clipped() {
    let mut r = rng(25);
    let x = gaussian_design(&mut r, 80, 3).standardize();
    let a: Vec<f64> = (0..80).map(|i| f64::from(u8::from(x.get(i, 1) > 0.0))).collect();
    let data = Dataset::new(normals(&mut r, 80), a, x).unwrap();
    let est = fit_regime(&data, &fixed_options(0.0), &PropensityMode::Logistic, PhiMode::Zero).unwrap();
    assert!(est.pi_hat.iter().all(|p| (0.01..=0.99).contains(p)));
    assert!(est.pi_hat.iter().any(|p| *p == 0.01 || *p == 0.99));
}

#[test]
fn all_treated_logistic_reports_nonconvergence() {
    let mut r = rng(26);
    let x = gaussian_design(&mut r, 30, 2).standardize();
    let data = Dataset::new(normals(&mut r, 30), vec![1.0; 30], x).unwrap();
    let est = fit_regime(&data, &fixed_options(0.1), &PropensityMode::Logistic, PhiMode::Zero).unwrap();
    assert!(!est.converged);
    assert!(!est.alpha_hat.unwrap().fit.converged);
}

#[test]
fn contrast_invariant_to_joint_shift_of_response_and_working_fit() {
    let mut r = rng(27);
    let n = 100;
    let x = gaussian_design(&mut r, n, 8).standardize();
    let a = coin_flips(&mut r, n);
    let y = normals(&mut r, n);
    let pi: Vec<f64> = (0..n).map(|_| r.random_range(0.2..0.8)).collect();
    let phi = normals(&mut r, n);
    let opts = fixed_options(0.05);
    let base = fit_contrast(&Dataset::new(y.clone(), a.clone(), x.clone()).unwrap(), &pi, &phi, &opts).unwrap();
    let c = 3.25;
    let shifted_y: Vec<f64> = y.iter().map(|v| v + c).collect();
    let shifted_phi: Vec<f64> = phi.iter().map(|v| v + c).collect();
    let shifted = fit_contrast(&Dataset::new(shifted_y, a, x).unwrap(), &pi, &shifted_phi, &opts).unwrap();
    assert!(max_abs_diff(&base.fit.coefficients, &shifted.fit.coefficients) < 1e-12);
}

#[test]
fn noiseless_data_recovers_contrast_support() {
    let mut r = rng(28);
    let n = 300;
    let k = 8;
    let x = gaussian_design(&mut r, n, k).standardize();
    let alpha = [0.0, 0.8, 0.0, 0.0, -0.6, 0.0, 0.0, 0.0, 0.0];
    let beta = [0.3, 1.0, 0.0, -1.2, 0.0, 0.0, 0.0, 0.8, 0.0];
    let gamma = [1.0, 0.0, 0.5, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0];
    let eta_a = x.mul_vec(&alpha).unwrap();
    let a: Vec<f64> = eta_a
        .iter()
        .map(|e| f64::from(u8::from(r.random::<f64>() < 1.0 / (1.0 + (-e).exp()))))
        .collect();
    let h = x.mul_vec(&gamma).unwrap();
    let c = x.mul_vec(&beta).unwrap();
    let y: Vec<f64> = (0..n).map(|i| h[i] + a[i] * c[i]).collect();
    let data = Dataset::new(y, a, x).unwrap();
    let est = fit_regime(&data, &RegimeOptions::default(), &PropensityMode::Logistic, PhiMode::Linear).unwrap();
    let support = est.beta_hat.fit.support.clone();
    assert_eq!(support, vec![0, 1, 3, 7], "{:?}", est.beta());
}

#[test]
fn raw_decisions_match_internal_decisions() {
    let mut r = rng(29);
    let rows: Vec<f64> = (0..100 * 3).map(|i| (i % 7) as f64 * 0.3 + r.random_range(-2.0..2.0) * 5.0).collect();
    let raw = DesignMatrix::with_intercept(100, 3, &rows).unwrap();
    let x = raw.standardize();
    let a = coin_flips(&mut r, 100);
    let y: Vec<f64> = (0..100).map(|i| a[i] * (raw.get(i, 1) - raw.get(i, 2)) + r.random_range(-1.0..1.0)).collect();
    let data = Dataset::new(y, a, x.clone()).unwrap();
    let est = fit_regime(&data, &fixed_options(0.01), &PropensityMode::SampleProportion, PhiMode::Linear).unwrap();
    for i in 0..100 {
        assert_eq!(est.decide_raw(&raw.row(i)).unwrap(), decide(est.beta(), &x.row(i)).unwrap());
    }
}

proptest! {
    #[test]
    fn decision_ignores_positive_rescaling(
        beta in prop::collection::vec(-5.0f64..5.0, 4),
        x in prop::collection::vec(-5.0f64..5.0, 4),
        c in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = beta.iter().map(|b| c * b).collect();
        prop_assert_eq!(decide(&beta, &x).unwrap(), decide(&scaled, &x).unwrap());
    }
}
