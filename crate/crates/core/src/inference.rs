//! Value of the estimated regime and its plug-in asymptotic variance.
//!
//! V̂ₙ = (1/n) Σ [Yᵢ + xᵢᵀβ̂ {I(xᵢᵀβ̂ > 0) − Aᵢ}] and
//! √n (V̂ₙ − Vₙ(β₀)) has variance
//!
//! ```text
//! σ² + σ² vₙᵀ X₁β B⁻¹ X₁βᵀ vₙ + vₙᵀ X₁β B^{-1/2} Σ₂₂ B^{-1/2} X₁βᵀ vₙ
//! ```
//!
//! with B = X₁βᵀ Δ X₁β, Δ = diag(π(1 − π)), vₙ = [I(xᵢᵀβ > 0) − πᵢ]/√n and
//! Σ₂₂ = B^{-1/2} X₁βᵀ W Δ^{1/2} (I − P) Δ^{1/2} W X₁β B^{-1/2}, where P
//! projects onto the columns of Δ^{1/2} X₁α. Every population quantity is
//! replaced by its fitted counterpart on the estimated supports.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::regime::{Dataset, RegimeEstimate};
use crate::solver::DesignMatrix;

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

const EIGEN_FLOOR: f64 = 1e-10;
const SINGULAR_RATIO: f64 = 1e-12;

/// The three summands of the value variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma2_hat: f64,
    /// σ̂²: noise in the observed responses.
    pub term_main: f64,
    /// σ̂² vₙᵀ X₁β B⁻¹ X₁βᵀ vₙ.
    pub term_beta: f64,
    /// vₙᵀ X₁β B^{-1/2} Σ₂₂ B^{-1/2} X₁βᵀ vₙ.
    pub term_sigma22: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub v_hat: f64,
    /// Asymptotic variance of √n (V̂ₙ − Vₙ(β₀)); the standard error of V̂ₙ
    /// is √(variance / n).
    pub variance: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub components: VarianceComponents,
    /// The same variance with Σ₂₂ replaced by its known-propensity
    /// counterpart Σ₂₂′ = B^{-1/2} X₁βᵀ W Δ W X₁β B^{-1/2}.
    pub variance_known_propensity: f64,
    pub n: usize,
}

/// Plug-in covariance blocks on the estimated supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBlocks {
    pub support_alpha: Vec<usize>,
    pub support_beta: Vec<usize>,
    /// X₁αᵀ Δ X₁α (empty when the α support is empty).
    pub b_n_alpha: DMatrix<f64>,
    /// X₁βᵀ Δ X₁β.
    pub b_n_beta: DMatrix<f64>,
    /// B_nβ^{-1/2}.
    pub b_n_beta_inv_sqrt: DMatrix<f64>,
    pub sigma22: DMatrix<f64>,
    /// Σ₂₂′, the known-propensity block (no projection).
    pub sigma22_known: DMatrix<f64>,
    pub w_diag: Vec<f64>,
    pub delta_diag: Vec<f64>,
}

/// V̂ₙ for the fitted regime.
pub fn estimate_value(data: &Dataset, regime: &RegimeEstimate) -> Result<f64> {
    value_from_scores(data, &contrast_scores(data, regime)?)
}

fn contrast_scores(data: &Dataset, regime: &RegimeEstimate) -> Result<Vec<f64>> {
    data.x().mul_vec(regime.beta())
}

/// V̂ₙ given the contrast scores xᵢᵀβ̂.
pub fn value_from_scores(data: &Dataset, scores: &[f64]) -> Result<f64> {
    check_len("contrast scores", data.n(), scores.len())?;
    let total: f64 = data
        .y()
        .iter()
        .zip(data.a())
        .zip(scores)
        .map(|((y, a), s)| y + s * (f64::from(u8::from(*s > 0.0)) - a))
        .sum();
    Ok(total / data.n() as f64)
}

/// Plug-in for W = diag(μ − Φ): μ̂ᵢ − Φ̂ᵢ = π̂ᵢ xᵢᵀβ̂.
pub fn plug_in_w(data: &Dataset, regime: &RegimeEstimate) -> Result<Vec<f64>> {
    let scores = contrast_scores(data, regime)?;
    check_len("propensity vector", data.n(), regime.pi_hat.len())?;
    Ok(scores.iter().zip(&regime.pi_hat).map(|(s, p)| p * s).collect())
}

/// Residual variance Σ rᵢ² / (n − |supp β̂| − |supp θ̂|) with
/// rᵢ = Yᵢ − Φ̂ᵢ − (Aᵢ − π̂ᵢ)xᵢᵀβ̂; the degrees of freedom are floored at 1.
pub fn estimate_sigma2(data: &Dataset, regime: &RegimeEstimate) -> Result<f64> {
    let scores = contrast_scores(data, regime)?;
    let n = data.n();
    check_len("propensity vector", n, regime.pi_hat.len())?;
    check_len("working-model fit", n, regime.phi_hat.len())?;
    let rss: f64 = (0..n)
        .map(|i| {
            let r = data.y()[i] - regime.phi_hat[i] - (data.a()[i] - regime.pi_hat[i]) * scores[i];
            r * r
        })
        .sum();
    let used = regime.beta_hat.fit.support.len()
        + regime.theta_hat.as_ref().map_or(0, |t| t.fit.support.len());
    let df = (n as f64 - used as f64).max(1.0);
    Ok((rss / df).max(0.0))
}

fn columns(x: &DesignMatrix, support: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, support.len(), |i, k| x.get(i, support[k]))
}

/// (V diag(f(λ)) Vᵀ) for a symmetric matrix.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mapped = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Covariance blocks for explicit W and Δ diagonals.
pub fn covariance_blocks(
    x: &DesignMatrix,
    w_diag: &[f64],
    delta_diag: &[f64],
    support_alpha: &[usize],
    support_beta: &[usize],
) -> Result<CovarianceBlocks> {
    let n = x.nrows();
    check_len("W diagonal", n, w_diag.len())?;
    check_len("Δ diagonal", n, delta_diag.len())?;
    if support_beta.is_empty() {
        return Err(Error::domain("support of the contrast estimate is empty"));
    }
    if let Some(&j) = support_alpha.iter().chain(support_beta).find(|&&j| j >= x.ncols()) {
        return Err(Error::domain(format!("support index {j} out of range")));
    }
    if delta_diag.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::domain("Δ diagonal must be nonnegative"));
    }

    let sqrt_delta = DVector::from_iterator(n, delta_diag.iter().map(|d| d.sqrt()));
    let x_beta = columns(x, support_beta);
    let x_alpha = columns(x, support_alpha);

    // Δ^{1/2} X₁β and Δ^{1/2} X₁α.
    let mut dx_beta = x_beta.clone();
    for (i, mut row) in dx_beta.row_iter_mut().enumerate() {
        row *= sqrt_delta[i];
    }
    let mut dx_alpha = x_alpha.clone();
    for (i, mut row) in dx_alpha.row_iter_mut().enumerate() {
        row *= sqrt_delta[i];
    }

    let b_beta = symmetrize(&(dx_beta.transpose() * &dx_beta));
    let eig = SymmetricEigen::new(b_beta.clone());
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max_eig > 0.0) || min_eig <= SINGULAR_RATIO * max_eig {
        return Err(Error::Singular(format!(
            "B_nβ = X₁βᵀΔX₁β is singular (support size {} for n = {n}); the contrast support is too large for the sample",
            support_beta.len()
        )));
    }
    let b_inv_sqrt = spectral_map(&b_beta, |l| 1.0 / l.max(EIGEN_FLOOR).sqrt());

    // G = Δ^{1/2} W X₁β.
    let mut g = dx_beta;
    for (i, mut row) in g.row_iter_mut().enumerate() {
        row *= w_diag[i];
    }
    let gtg = g.transpose() * &g;

    let b_alpha = symmetrize(&(dx_alpha.transpose() * &dx_alpha));
    let explained = if support_alpha.is_empty() {
        DMatrix::zeros(support_beta.len(), support_beta.len())
    } else {
        // Gᵀ P G with P = M (MᵀM)⁺ Mᵀ, M = Δ^{1/2} X₁α.
        let eig_alpha = SymmetricEigen::new(b_alpha.clone());
        let top = eig_alpha.eigenvalues.iter().copied().fold(0.0, f64::max);
        let cutoff = EIGEN_FLOOR * top.max(1.0);
        let pinv = spectral_map(&b_alpha, |l| if l > cutoff { 1.0 / l } else { 0.0 });
        let mtg = dx_alpha.transpose() * &g;
        mtg.transpose() * pinv * mtg
    };

    let sigma22_known = symmetrize(&(&b_inv_sqrt * &gtg * &b_inv_sqrt));
    let sigma22 = symmetrize(&(&b_inv_sqrt * (gtg - explained) * &b_inv_sqrt));

    Ok(CovarianceBlocks {
        support_alpha: support_alpha.to_vec(),
        support_beta: support_beta.to_vec(),
        b_n_alpha: b_alpha,
        b_n_beta: b_beta,
        b_n_beta_inv_sqrt: b_inv_sqrt,
        sigma22,
        sigma22_known,
        w_diag: w_diag.to_vec(),
        delta_diag: delta_diag.to_vec(),
    })
}

/// Σ₂₂ and friends from the fitted regime, with Ŵ from [`plug_in_w`] and
/// Δ̂ = diag(π̂(1 − π̂)).
pub fn compute_sigma22(
    data: &Dataset,
    regime: &RegimeEstimate,
    support_alpha: &[usize],
    support_beta: &[usize],
) -> Result<CovarianceBlocks> {
    let w = plug_in_w(data, regime)?;
    let delta: Vec<f64> = regime.pi_hat.iter().map(|p| p * (1.0 - p)).collect();
    covariance_blocks(data.x(), &w, &delta, support_alpha, support_beta)
}

/// Variance components for a given indicator-minus-propensity vector
/// `v` (already divided by √n).
fn components(x: &DesignMatrix, blocks: &CovarianceBlocks, v: &[f64], sigma2: f64, known: bool) -> VarianceComponents {
    let x_beta = columns(x, &blocks.support_beta);
    let u = x_beta.transpose() * DVector::from_column_slice(v);
    let half = &blocks.b_n_beta_inv_sqrt * u;
    let term_beta = sigma2 * half.dot(&half);
    let sigma22 = if known { &blocks.sigma22_known } else { &blocks.sigma22 };
    let term_sigma22 = half.dot(&(sigma22 * &half));
    VarianceComponents { sigma2_hat: sigma2, term_main: sigma2, term_beta, term_sigma22 }
}

/// Assembles V̂ₙ, the three-term variance and the 95% interval.
pub fn value_variance(
    data: &Dataset,
    regime: &RegimeEstimate,
    blocks: &CovarianceBlocks,
    sigma2_hat: f64,
) -> Result<ValueEstimate> {
    if !(sigma2_hat >= 0.0) {
        return Err(Error::domain(format!("σ̂² must be >= 0, got {sigma2_hat}")));
    }
    let n = data.n();
    check_len("propensity vector", n, regime.pi_hat.len())?;
    let scores = contrast_scores(data, regime)?;
    let v_hat = value_from_scores(data, &scores)?;
    let root_n = (n as f64).sqrt();
    let v: Vec<f64> = scores
        .iter()
        .zip(&regime.pi_hat)
        .map(|(s, p)| (f64::from(u8::from(*s > 0.0)) - p) / root_n)
        .collect();

    let comp = components(data.x(), blocks, &v, sigma2_hat, false);
    let known = components(data.x(), blocks, &v, sigma2_hat, true);
    let variance = comp.term_main + comp.term_beta + comp.term_sigma22;
    let variance_known_propensity = known.term_main + known.term_beta + known.term_sigma22;
    let std_error = (variance.max(0.0) / n as f64).sqrt();
    Ok(ValueEstimate {
        v_hat,
        variance,
        std_error,
        ci_lower: v_hat - Z_975 * std_error,
        ci_upper: v_hat + Z_975 * std_error,
        components: comp,
        variance_known_propensity,
        n,
    })
}

/// End-to-end value inference for a fitted regime: σ̂², blocks on the
/// estimated supports (α support empty unless π̂ came from the logistic
/// model), then the variance.
pub fn infer_value(data: &Dataset, regime: &RegimeEstimate) -> Result<ValueEstimate> {
    let sigma2 = estimate_sigma2(data, regime)?;
    let support_alpha = regime
        .alpha_hat
        .as_ref()
        .map(|s| s.fit.support.clone())
        .unwrap_or_default();
    let blocks = compute_sigma22(data, regime, &support_alpha, &regime.beta_hat.fit.support)?;
    value_variance(data, regime, &blocks, sigma2)
}
