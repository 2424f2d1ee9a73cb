use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{trace_path, validate_grid};
use super::{fit_lambda_path, FitResult, Problem, SolverOptions};
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;

/// K-fold cross-validation summary over a λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Descending; truncated to the prefix every fold's path reached.
    pub lambda_grid: Vec<f64>,
    pub mean_cv_loss: Vec<f64>,
    pub se_cv_loss: Vec<f64>,
    pub selected_lambda: f64,
    pub selected_index: usize,
    pub folds: usize,
    pub fold_assignment_seed: u64,
    /// The CV curve is flat (or the grid is trivial), so the selection
    /// carries no information.
    pub degenerate: bool,
}

/// Fold label for every row: a seeded shuffle dealt round-robin.
pub(crate) fn fold_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % k;
    }
    labels
}

/// K-fold cross-validation of the penalized fit along `grid`.
///
/// Out-of-fold loss is the mean deviance for logistic problems and the mean
/// squared error for least squares. The selected λ minimizes the mean loss,
/// ties going to the larger λ.
pub fn cross_validate(
    problem: &Problem,
    template: &PenaltySpec,
    k: usize,
    grid: &[f64],
    seed: u64,
    opts: &SolverOptions,
) -> Result<CvReport> {
    let n = problem.nrows();
    if k < 2 {
        return Err(Error::domain(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::domain(format!("{k} folds requested for only {n} rows")));
    }
    validate_grid(grid)?;

    let labels = fold_labels(n, k, seed);
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<Vec<f64>> {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i] == fold);
            let train_problem = problem.subset(&train);
            let test_problem = problem.subset(&test);
            let path = fit_lambda_path(&train_problem, template, grid, opts)?;
            path.iter()
                .map(|fit| test_problem.prediction_loss(&fit.coefficients))
                .collect()
        })
        .collect::<Result<_>>()?;

    let reach = per_fold.iter().map(Vec::len).min().unwrap_or(0).max(1);
    let lambda_grid = grid[..reach].to_vec();
    let mut mean_cv_loss = Vec::with_capacity(reach);
    let mut se_cv_loss = Vec::with_capacity(reach);
    for idx in 0..reach {
        let losses: Vec<f64> = per_fold.iter().map(|f| f[idx]).collect();
        mean_cv_loss.push(crate::linalg::mean(&losses));
        se_cv_loss.push(crate::linalg::sample_sd(&losses) / (k as f64).sqrt());
    }

    let mut selected_index = 0;
    for (idx, &m) in mean_cv_loss.iter().enumerate() {
        if m < mean_cv_loss[selected_index] {
            selected_index = idx;
        }
    }
    let lo = mean_cv_loss.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean_cv_loss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = reach == 1 || hi - lo <= 1e-12 * (1.0 + lo.abs());

    Ok(CvReport {
        selected_lambda: lambda_grid[selected_index],
        selected_index,
        lambda_grid,
        mean_cv_loss,
        se_cv_loss,
        folds: k,
        fold_assignment_seed: seed,
        degenerate,
    })
}

/// Cross-validates on `grid` (the default grid from the problem's λ_max when
/// `None`), then refits the full data along the path down to the selected λ.
pub fn fit_cv(
    problem: &Problem,
    template: &PenaltySpec,
    k: usize,
    grid: Option<&[f64]>,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(FitResult, CvReport)> {
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = super::default_lambda_grid(problem.lambda_max(), opts.lambda_grid_size, opts.lambda_min_ratio);
            &owned
        }
    };
    let report = cross_validate(problem, template, k, grid, seed, opts)?;
    let path = trace_path(problem, template, &report.lambda_grid[..=report.selected_index], opts, false)?;
    let fit = path.into_iter().last().expect("validated non-empty grid");
    Ok((fit, report))
}
