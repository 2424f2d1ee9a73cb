#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use optregime::{DesignMatrix, RegimeEstimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn coin_flips(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect()
}

/// Intercept plus `k` Gaussian columns.
pub fn gaussian_design(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DesignMatrix {
    let rows = normals(rng, n * k);
    DesignMatrix::with_intercept(n, k, &rows).unwrap()
}

pub fn dense(x: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x.get(i, j))
}

/// Normal-equations least squares.
pub fn ols(x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
    let xm = dense(x);
    let xty = xm.transpose() * DVector::from_column_slice(y);
    (xm.transpose() * &xm).cholesky().unwrap().solve(&xty).iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A regime estimate with given contrast, propensities and working fit,
/// as if produced by the estimator.
pub fn manual_regime(
    beta: Vec<f64>,
    pi_hat: Vec<f64>,
    phi_hat: Vec<f64>,
) -> optregime::RegimeEstimate {
    use optregime::regime::{PropensityKind, StageFit};
    use optregime::solver::FitResult;
    let p = beta.len();
    RegimeEstimate {
        alpha_hat: None,
        theta_hat: None,
        beta_hat: StageFit {
            fit: FitResult {
                support: (0..p).filter(|&j| beta[j] != 0.0).collect(),
                coefficients: beta,
                lambda: 0.0,
                penalty: optregime::PenaltySpec::lasso(0.0).unwrap(),
                objective: 0.0,
                iterations: 0,
                converged: true,
                trace: Vec::new(),
            },
            cv: None,
        },
        propensity_mode: PropensityKind::Known,
        phi_mode: optregime::PhiMode::Linear,
        pi_hat,
        phi_hat,
        scales: vec![1.0; p],
        converged: true,
    }
}
