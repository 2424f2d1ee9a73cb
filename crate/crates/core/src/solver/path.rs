use super::{FitResult, Problem, SolverOptions};
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;

/// `size` log-spaced values from `lambda_max` down to `min_ratio · lambda_max`.
/// A zero `lambda_max` (nothing to select) yields the single grid `[0]`.
pub fn default_lambda_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if !(lambda_max > 0.0) || size == 0 {
        return vec![0.0];
    }
    if size == 1 {
        return vec![lambda_max];
    }
    let hi = lambda_max.ln();
    let lo = (lambda_max * min_ratio).ln();
    (0..size)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                (hi + (lo - hi) * k as f64 / (size - 1) as f64).exp()
            }
        })
        .collect()
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::domain("lambda grid entries must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain("lambda grid must be strictly descending"));
    }
    Ok(())
}

/// Warm-started fits along a strictly descending λ grid.
///
/// At every λ the LASSO solution (warm-started from the previous λ) seeds the
/// LLA refinement for nonconvex penalties. When `opts.max_support` is set the
/// path stops after the first fit whose penalized support exceeds it, so the
/// result may be a prefix of the grid aligned with its head. The path also
/// stops after the first fit that fails to converge, once the fit
/// explains `opts.saturation_ratio` of the null loss or, from the fifth λ
/// on, once the explained fraction of the LASSO path (which is monotone,
/// unlike folded-concave paths) stops growing by `opts.min_relative_gain`.
pub fn fit_lambda_path(
    problem: &Problem,
    template: &PenaltySpec,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FitResult>> {
    trace_path(problem, template, grid, opts, true)
}

pub(crate) fn trace_path(
    problem: &Problem,
    template: &PenaltySpec,
    grid: &[f64],
    opts: &SolverOptions,
    early_stop: bool,
) -> Result<Vec<FitResult>> {
    validate_grid(grid)?;
    let penalized = problem.design().penalized_mask().iter().filter(|&&b| b).count();
    let max_support = opts.max_support.resolve(problem.nrows(), penalized);
    let mut out = Vec::with_capacity(grid.len());
    let mut lasso_coef = vec![0.0; problem.ncols()];
    let null_loss = problem.loss(&problem.null_fit())?;
    let mut previous_ratio = 0.0;
    for (k, &lambda) in grid.iter().enumerate() {
        let spec = template.with_lambda(lambda)?;
        let lasso = problem.fit_lasso_from(lambda, lasso_coef, opts);
        lasso_coef = lasso.coef.clone();
        let lasso_ratio = explained(problem, &lasso_coef, null_loss)?;
        let fit = problem.refine(&spec, lasso, opts);
        let size = fit.penalized_support(problem.design()).len();
        let ratio = explained(problem, &fit.coefficients, null_loss)?;
        let converged = fit.converged;
        out.push(fit);
        if !early_stop {
            continue;
        }
        if !converged
            || max_support.is_some_and(|m| size > m)
            || ratio.max(lasso_ratio) >= opts.saturation_ratio
            || (k >= 4 && lasso_ratio - previous_ratio < opts.min_relative_gain * lasso_ratio.abs())
        {
            break;
        }
        previous_ratio = lasso_ratio;
    }
    Ok(out)
}

/// Fraction of the null loss explained by `coef`.
fn explained(problem: &Problem, coef: &[f64], null_loss: f64) -> Result<f64> {
    Ok(if null_loss > 0.0 { 1.0 - problem.loss(coef)? / null_loss } else { 1.0 })
}
