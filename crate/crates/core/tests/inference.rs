mod common;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use optregime::inference::{
    compute_sigma22, covariance_blocks, estimate_sigma2, estimate_value, infer_value, value_from_scores,
    value_variance,
};
use optregime::{fit_regime, Dataset, DesignMatrix, PhiMode, PropensityMode, RegimeOptions};
use proptest::prelude::*;
use rand::Rng;

fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Σ₂₂ evaluated with explicit n×n matrices: B^{-1/2} X₁βᵀ W Δ^{1/2} (I − P) Δ^{1/2} W X₁β B^{-1/2}.
fn dense_sigma22(x: &DesignMatrix, w: &[f64], delta: &[f64], sa: &[usize], sb: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let xb = DMatrix::from_fn(n, sb.len(), |i, k| x.get(i, sb[k]));
    let xa = DMatrix::from_fn(n, sa.len(), |i, k| x.get(i, sa[k]));
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let dm = DMatrix::from_diagonal(&DVector::from_column_slice(delta));
    let dh = dm.map(f64::sqrt);
    let b = xb.transpose() * &dm * &xb;
    let m = &dh * &xa;
    let p = &m * (m.transpose() * &m).try_inverse().unwrap() * m.transpose();
    let bh = inv_sqrt(&b);
    let inner = DMatrix::identity(n, n) - &p;
    (&bh * xb.transpose() * &wm * &dh * inner * &dh * &wm * &xb * &bh, p)
}

fn random_problem(seed: u64, n: usize, k: usize) -> (DesignMatrix, Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let x = gaussian_design(&mut r, n, k);
    let w = normals(&mut r, n);
    let delta = (0..n).map(|_| r.random_range(0.01..0.25)).collect();
    (x, w, delta)
}

#[test]
fn value_reduces_to_mean_response() {
    let mut r = rng(31);
    let x = gaussian_design(&mut r, 30, 3);
    let y = normals(&mut r, 30);
    let beta = vec![0.2, 1.0, -0.5, 0.3];
    let scores = x.mul_vec(&beta).unwrap();
    let a: Vec<f64> = scores.iter().map(|s| f64::from(u8::from(*s > 0.0))).collect();
    let mean = y.iter().sum::<f64>() / 30.0;

    let data = Dataset::new(y.clone(), a, x.clone()).unwrap();
    let agree = manual_regime(beta, vec![0.5; 30], vec![0.0; 30]);
    assert!((estimate_value(&data, &agree).unwrap() - mean).abs() < 1e-12);

    let data = Dataset::new(y, coin_flips(&mut r, 30), x).unwrap();
    let null = manual_regime(vec![0.0; 4], vec![0.5; 30], vec![0.0; 30]);
    assert!((estimate_value(&data, &null).unwrap() - mean).abs() < 1e-12);
}

#[test]
fn value_two_subject_hand_example() {
    let x = DesignMatrix::with_intercept(2, 0, &[]).unwrap();
    let data = Dataset::new(vec![1.0, 2.0], vec![1.0, 0.0], x).unwrap();
    assert!((value_from_scores(&data, &[0.5, -0.3]).unwrap() - 1.5).abs() < 1e-15);
}

#[test]
fn zero_w_annihilates_sigma22() {
    let (x, _, delta) = random_problem(32, 40, 4);
    let blocks = covariance_blocks(&x, &[0.0; 40], &delta, &[0, 1], &[0, 2, 3]).unwrap();
    assert!(blocks.sigma22.iter().all(|v| *v == 0.0));
    assert!(blocks.sigma22_known.iter().all(|v| *v == 0.0));
}

#[test]
fn single_column_blocks_match_dense_evaluation() {
    let x = DesignMatrix::with_intercept(5, 1, &[0.3, -1.2, 0.8, 2.0, -0.4]).unwrap();
    let w = [0.5, -1.0, 0.25, 1.5, -0.75];
    let delta = [0.25, 0.21, 0.16, 0.09, 0.24];
    let blocks = covariance_blocks(&x, &w, &delta, &[0], &[1]).unwrap();
    let (oracle, _) = dense_sigma22(&x, &w, &delta, &[0], &[1]);
    assert!((blocks.sigma22[(0, 0)] - oracle[(0, 0)]).abs() < 1e-12);
    let b: f64 = (0..5).map(|i| delta[i] * x.get(i, 1).powi(2)).sum();
    assert!((blocks.b_n_beta[(0, 0)] - b).abs() < 1e-12);
    assert_eq!(blocks.delta_diag, delta.to_vec());
}

#[test]
fn blocks_match_dense_oracle_and_projection_is_idempotent() {
    for seed in 0..10 {
        let (x, w, delta) = random_problem(100 + seed, 30, 5);
        let (sa, sb) = (vec![0, 1, 4], vec![0, 2, 3, 4]);
        let blocks = covariance_blocks(&x, &w, &delta, &sa, &sb).unwrap();
        let (oracle, p) = dense_sigma22(&x, &w, &delta, &sa, &sb);
        assert!((&p * &p - &p).amax() <= 1e-8);
        assert!((&blocks.sigma22 - &oracle).amax() < 1e-8 * oracle.amax().max(1.0));
        let min_eig = SymmetricEigen::new(blocks.sigma22.clone()).eigenvalues.min();
        assert!(min_eig >= -1e-8);
    }
}

#[test]
fn singular_beta_block_is_reported() {
    let x = DesignMatrix::with_intercept(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]).unwrap();
    let err = covariance_blocks(&x, &[1.0; 4], &[0.2; 4], &[], &[1, 2]);
    assert!(matches!(err, Err(optregime::Error::Singular(_))));
}

#[test]
fn correct_working_model_variance_has_two_terms() {
    let mut r = rng(33);
    let n = 50;
    let x = gaussian_design(&mut r, n, 3);
    let beta = vec![0.1, 0.8, -0.4, 0.0];
    let pi: Vec<f64> = (0..n).map(|_| r.random_range(0.2..0.8)).collect();
    let data = Dataset::new(normals(&mut r, n), coin_flips(&mut r, n), x.clone()).unwrap();
    let regime = manual_regime(beta.clone(), pi.clone(), vec![0.0; n]);
    let delta: Vec<f64> = pi.iter().map(|p| p * (1.0 - p)).collect();
    let blocks = covariance_blocks(&x, &[0.0; 50], &delta, &[0, 1], &[0, 1, 2]).unwrap();
    let sigma2 = 1.7;
    let est = value_variance(&data, &regime, &blocks, sigma2).unwrap();

    let scores = x.mul_vec(&beta).unwrap();
    let v = DVector::from_iterator(n, (0..n).map(|i| (f64::from(u8::from(scores[i] > 0.0)) - pi[i]) / (n as f64).sqrt()));
    let xb = DMatrix::from_fn(n, 3, |i, k| x.get(i, k));
    let b = xb.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(&delta)) * &xb;
    let u = xb.transpose() * v;
    let quad = (u.transpose() * b.try_inverse().unwrap() * &u)[(0, 0)];
    assert!((est.variance - sigma2 * (1.0 + quad)).abs() < 1e-10);
    assert_eq!(est.components.term_sigma22, 0.0);
    assert!(est.ci_lower <= est.v_hat && est.v_hat <= est.ci_upper);
}

#[test]
fn vanishing_indicator_gap_leaves_noise_variance() {
    let (x, w, delta) = random_problem(34, 40, 3);
    let beta = vec![0.3, -1.0, 0.5, 0.7];
    let pi: Vec<f64> = x.mul_vec(&beta).unwrap().iter().map(|s| f64::from(u8::from(*s > 0.0))).collect();
    let mut r = rng(35);
    let data = Dataset::new(normals(&mut r, 40), coin_flips(&mut r, 40), x.clone()).unwrap();
    let blocks = covariance_blocks(&x, &w, &delta, &[0, 2], &[0, 1, 3]).unwrap();
    let est = value_variance(&data, &manual_regime(beta, pi, vec![0.0; 40]), &blocks, 0.8).unwrap();
    assert_eq!(est.variance, 0.8);
}

#[test]
fn sigma2_examples() {
    let mut r = rng(36);
    let n = 100;
    let x = gaussian_design(&mut r, n, 4);
    let a = coin_flips(&mut r, n);
    let pi = vec![0.5; n];
    let beta = vec![0.5, 1.0, 0.0, -1.0, 0.0];
    let scores = x.mul_vec(&beta).unwrap();
    let phi = x.mul_vec(&[1.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
    let y: Vec<f64> = (0..n).map(|i| phi[i] + (a[i] - pi[i]) * scores[i]).collect();
    let data = Dataset::new(y, a.clone(), x.clone()).unwrap();
    assert!(estimate_sigma2(&data, &manual_regime(beta, pi.clone(), phi)).unwrap() <= 1e-20);

    let mut total = 0.0;
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let data = Dataset::new(normals(&mut r, n), a.clone(), x.clone()).unwrap();
        total += estimate_sigma2(&data, &manual_regime(vec![0.0; 5], pi.clone(), vec![0.0; n])).unwrap();
    }
    assert!((total / 20.0 - 1.0).abs() < 0.1);

    let tiny = DesignMatrix::with_intercept(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
    let data = Dataset::new(vec![1.0, 2.0, 4.0], vec![1.0, 0.0, 1.0], tiny).unwrap();
    let s2 = estimate_sigma2(&data, &manual_regime(vec![1.0, 1.0, 1.0], vec![0.5; 3], vec![0.0; 3])).unwrap();
    // Scores (2, 2, 6), residuals (1 − 0.5·2, 2 + 0.5·2, 4 − 0.5·6) = (0, 3, 1)
    // over one degree of freedom.
    assert!((s2 - 10.0).abs() < 1e-12);
}

#[test]
fn fitted_regime_inference_is_consistent() {
    let mut r = rng(37);
    let n = 200;
    let x = gaussian_design(&mut r, n, 10).standardize();
    let a = coin_flips(&mut r, n);
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + x.get(i, 3) + a[i] * (x.get(i, 1) - x.get(i, 2)) + r.random_range(-1.0..1.0))
        .collect();
    let data = Dataset::new(y, a, x).unwrap();
    let est = fit_regime(&data, &RegimeOptions::default(), &PropensityMode::Logistic, PhiMode::Linear).unwrap();
    let value = infer_value(&data, &est).unwrap();
    let c = value.components;
    assert!(c.term_main >= -1e-10 && c.term_beta >= -1e-10 && c.term_sigma22 >= -1e-10);
    assert!((value.variance - (c.term_main + c.term_beta + c.term_sigma22)).abs() < 1e-12);
    assert!(value.variance >= c.sigma2_hat);
    assert!(value.variance_known_propensity >= value.variance - 1e-8);
    assert!(value.ci_lower <= value.v_hat && value.v_hat <= value.ci_upper);
    assert!((value.std_error - (value.variance / n as f64).sqrt()).abs() < 1e-15);

    let alpha_support = est.alpha_hat.as_ref().unwrap().fit.support.clone();
    let blocks = compute_sigma22(&data, &est, &alpha_support, &est.beta_hat.fit.support).unwrap();
    assert!(blocks.delta_diag.iter().all(|d| *d > 0.0 && *d <= 0.25));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variance_is_invariant_to_row_order(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let n = 30;
        let x = gaussian_design(&mut r, n, 3);
        let y = normals(&mut r, n);
        let a = coin_flips(&mut r, n);
        let beta = normals(&mut r, 4);
        let pi: Vec<f64> = (0..n).map(|_| r.random_range(0.1..0.9)).collect();
        let phi = normals(&mut r, n);
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);

        let run = |idx: &[usize]| {
            let rows: Vec<f64> = idx.iter().flat_map(|&i| x.row(i)).collect();
            let xp = DesignMatrix::from_rows(n, 4, &rows).unwrap().mark_intercept().unwrap();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let data = Dataset::new(pick(&y), pick(&a), xp).unwrap();
            let regime = manual_regime(beta.clone(), pick(&pi), pick(&phi));
            let sigma2 = estimate_sigma2(&data, &regime).unwrap();
            let blocks = compute_sigma22(&data, &regime, &[0, 1], &[0, 1, 2, 3]).unwrap();
            value_variance(&data, &regime, &blocks, sigma2).unwrap()
        };
        let identity: Vec<usize> = (0..n).collect();
        let base = run(&identity);
        let perm = run(&order);
        prop_assert!((base.variance - perm.variance).abs() <= 1e-9 * base.variance.abs().max(1.0));
        prop_assert!((base.v_hat - perm.v_hat).abs() <= 1e-12);
        prop_assert!(base.variance_known_propensity >= base.variance - 1e-8);
    }
}
