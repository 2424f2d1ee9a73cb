use serde::{Deserialize, Serialize};

use super::generate::Truth;
use crate::error::{check_len, Result};
use crate::regime::RegimeEstimate;
use crate::solver::DesignMatrix;

/// Selection and decision accuracy of one fitted regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub l2_loss_beta: f64,
    /// Absent when π̂ was not estimated by the logistic model.
    pub l2_loss_alpha: Option<f64>,
    pub fn_beta: usize,
    pub fn_alpha: Option<usize>,
    pub num_selected_beta: usize,
    pub num_selected_alpha: Option<usize>,
    pub pcd: f64,
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Missed true covariates: positions of the truth where the estimate is zero.
fn false_negatives(estimate: &[f64], positions: &[usize]) -> usize {
    positions.iter().filter(|&&j| estimate[j] == 0.0).count()
}

/// Selected covariates, intercept excluded.
fn selected(estimate: &[f64]) -> usize {
    estimate.iter().skip(1).filter(|&&v| v != 0.0).count()
}

/// Fraction of rows of `x_eval` where I(β̂ᵀx > 0) agrees with I(β₀ᵀx > 0).
/// Both rules are mapped onto the scale of `x_eval` first.
pub fn decision_agreement(beta_raw: &[f64], beta0_raw: &[f64], x_eval: &DesignMatrix) -> Result<f64> {
    check_len("estimated contrast", x_eval.ncols(), beta_raw.len())?;
    check_len("true contrast", x_eval.ncols(), beta0_raw.len())?;
    let hat = x_eval.mul_vec(&x_eval.to_internal_coefficients(beta_raw))?;
    let truth = x_eval.mul_vec(&x_eval.to_internal_coefficients(beta0_raw))?;
    let agree = hat.iter().zip(&truth).filter(|(h, t)| (**h > 0.0) == (**t > 0.0)).count();
    Ok(agree as f64 / x_eval.nrows() as f64)
}

/// L₂ loss, FN, #S and PCD of one estimate; coefficients are compared in
/// raw covariate units, intercept included in the L₂ loss.
pub fn compute_metrics(estimate: &RegimeEstimate, truth: &Truth, x_eval: &DesignMatrix) -> Result<ReplicateMetrics> {
    let beta = estimate.beta_raw();
    let beta0 = truth.beta0_dense();
    check_len("estimated contrast", beta0.len(), beta.len())?;
    let alpha = estimate.alpha_raw();
    let alpha0 = truth.alpha0_dense();
    Ok(ReplicateMetrics {
        l2_loss_beta: l2_distance(&beta, &beta0),
        l2_loss_alpha: alpha.as_ref().map(|a| l2_distance(a, &alpha0)),
        fn_beta: false_negatives(&beta, &truth.beta0.positions),
        fn_alpha: alpha.as_ref().map(|a| false_negatives(a, &truth.alpha0.positions)),
        num_selected_beta: selected(&beta),
        num_selected_alpha: alpha.as_ref().map(|a| selected(a)),
        pcd: decision_agreement(&beta, &beta0, x_eval)?,
    })
}
