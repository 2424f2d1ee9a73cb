//! Penalized M-estimation: logistic and least-squares losses with folded-concave
//! penalties, solved by cyclic coordinate descent wrapped in local linear
//! approximation (LLA) for the nonconvex families.

mod cd;
mod cv;
mod design;
mod path;

pub use cv::{cross_validate, fit_cv, CvReport};
pub use design::DesignMatrix;
pub use path::{default_lambda_grid, fit_lambda_path};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, expit, log1p_exp};
use crate::penalty::PenaltySpec;

/// Fitted probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` wherever
/// they enter a deviance or a weight.
pub const PROB_CLIP: f64 = 1e-6;
/// Floor on the IRLS working weights π(1 − π).
pub const IRLS_WEIGHT_FLOOR: f64 = 1e-5;

/// Knobs shared by every penalized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tolerance: f64,
    /// Budget of coordinate sweeps per fit (all inner solves together).
    pub max_sweeps: usize,
    /// Maximum number of LLA reweighting steps after the LASSO start.
    pub lla_steps: usize,
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: f64,
    /// Stop a λ path once a fit selects more penalized coordinates than this.
    pub max_support: SupportLimit,
    /// Stop a λ path once the fit explains this fraction of the null loss.
    pub saturation_ratio: f64,
    /// Stop a λ path once the explained fraction grows by less than this
    /// relative amount between consecutive λ (checked from the fifth λ on).
    pub min_relative_gain: f64,
    /// Record the surrogate objective after every sweep in [`FitResult::trace`].
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_sweeps: 10_000,
            lla_steps: 10,
            lambda_grid_size: 100,
            lambda_min_ratio: 0.01,
            max_support: SupportLimit::Auto,
            saturation_ratio: 0.999,
            min_relative_gain: 1e-5,
            trace: false,
        }
    }
}

/// Cap on the penalized support along a λ path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportLimit {
    /// Fit the whole grid.
    Unlimited,
    Fixed(usize),
    /// ⌈n / ln p⌉ for n rows and p penalized columns: beyond it the sparse
    /// regime the estimator relies on no longer holds.
    Auto,
}

impl SupportLimit {
    pub fn resolve(self, n: usize, penalized: usize) -> Option<usize> {
        match self {
            SupportLimit::Unlimited => None,
            SupportLimit::Fixed(m) => Some(m),
            SupportLimit::Auto => Some((n as f64 / (penalized.max(3) as f64).ln()).ceil() as usize),
        }
    }
}

impl std::str::FromStr for SupportLimit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "unlimited" => Ok(SupportLimit::Unlimited),
            "auto" => Ok(SupportLimit::Auto),
            other => other
                .parse()
                .map(SupportLimit::Fixed)
                .map_err(|_| format!("expected 'auto', 'none' or a count, got '{other}'")),
        }
    }
}

/// One penalized fit at a single λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    /// Indices of the nonzero coefficients, ascending.
    pub support: Vec<usize>,
    pub lambda: f64,
    pub penalty: PenaltySpec,
    /// Loss plus penalty at `coefficients`.
    pub objective: f64,
    /// Coordinate sweeps used.
    pub iterations: usize,
    pub converged: bool,
    /// Per weighted-L1 solve (LASSO start, then each LLA step), the surrogate
    /// objective after every sweep (least squares) or every IRLS step
    /// (logistic). Filled only when [`SolverOptions::trace`] is set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<Vec<f64>>,
}

impl FitResult {
    /// Support restricted to penalized coordinates of `x`.
    pub fn penalized_support(&self, x: &DesignMatrix) -> Vec<usize> {
        self.support.iter().copied().filter(|&j| x.is_penalized(j)).collect()
    }
}

pub(crate) fn support_of(coef: &[f64]) -> Vec<usize> {
    coef.iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// (1/n) Σ [log(1 + exp(xᵢᵀα)) − Aᵢ xᵢᵀα]
    Logistic,
    /// (1/n) Σ (yᵢ − xᵢᵀθ)²
    SquaredError,
}

/// A design, a response, and the loss linking them.
#[derive(Debug, Clone)]
pub struct Problem {
    x: DesignMatrix,
    response: Vec<f64>,
    loss: LossKind,
    /// ‖xⱼ‖² / n per column.
    col_sq: Vec<f64>,
}

impl Problem {
    /// Logistic regression of a binary response on `x`.
    pub fn logistic(x: DesignMatrix, a: Vec<f64>) -> Result<Self> {
        check_len("binary response", x.nrows(), a.len())?;
        if let Some(i) = a.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::domain(format!(
                "logistic response must be 0/1, found {} at row {i}",
                a[i]
            )));
        }
        Ok(Self::assemble(x, a, LossKind::Logistic))
    }

    /// Least squares of `y` on `x`.
    pub fn least_squares(x: DesignMatrix, y: Vec<f64>) -> Result<Self> {
        check_len("response", x.nrows(), y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("response contains non-finite values"));
        }
        Ok(Self::assemble(x, y, LossKind::SquaredError))
    }

    fn assemble(x: DesignMatrix, response: Vec<f64>, loss: LossKind) -> Self {
        let n = x.nrows() as f64;
        let col_sq = (0..x.ncols()).map(|j| dot(x.col(j), x.col(j)) / n).collect();
        Self { x, response, loss, col_sq }
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn subset(&self, rows: &[usize]) -> Self {
        Self::assemble(
            self.x.select_rows(rows),
            rows.iter().map(|&i| self.response[i]).collect(),
            self.loss,
        )
    }

    /// Unpenalized loss at `coef`.
    pub fn loss(&self, coef: &[f64]) -> Result<f64> {
        let eta = self.x.mul_vec(coef)?;
        Ok(self.loss_from_eta(&eta))
    }

    pub(crate) fn loss_from_eta(&self, eta: &[f64]) -> f64 {
        let n = self.nrows() as f64;
        match self.loss {
            LossKind::Logistic => {
                eta.iter()
                    .zip(&self.response)
                    .map(|(e, a)| log1p_exp(*e) - a * e)
                    .sum::<f64>()
                    / n
            }
            LossKind::SquaredError => {
                eta.iter()
                    .zip(&self.response)
                    .map(|(e, y)| (y - e) * (y - e))
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Analytic gradient of the unpenalized loss.
    pub fn gradient(&self, coef: &[f64]) -> Result<Vec<f64>> {
        let eta = self.x.mul_vec(coef)?;
        Ok(self.gradient_from_eta(&eta))
    }

    pub(crate) fn gradient_from_eta(&self, eta: &[f64]) -> Vec<f64> {
        let n = self.nrows() as f64;
        let v: Vec<f64> = match self.loss {
            LossKind::Logistic => eta
                .iter()
                .zip(&self.response)
                .map(|(e, a)| (expit(*e) - a) / n)
                .collect(),
            LossKind::SquaredError => eta
                .iter()
                .zip(&self.response)
                .map(|(e, y)| -2.0 * (y - e) / n)
                .collect(),
        };
        (0..self.ncols()).map(|j| dot(self.x.col(j), &v)).collect()
    }

    /// Loss plus Σ ρ(|coefⱼ|) over penalized coordinates.
    pub fn objective(&self, coef: &[f64], spec: &PenaltySpec) -> Result<f64> {
        Ok(self.loss(coef)? + spec.total(coef, &self.x.penalized_mask()))
    }

    /// Out-of-sample loss used for cross-validation: mean deviance for the
    /// logistic loss (probabilities clipped), mean squared error otherwise.
    pub fn prediction_loss(&self, coef: &[f64]) -> Result<f64> {
        let eta = self.x.mul_vec(coef)?;
        Ok(match self.loss {
            LossKind::Logistic => {
                let dev: f64 = eta
                    .iter()
                    .zip(&self.response)
                    .map(|(e, a)| {
                        let p = expit(*e).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                        -2.0 * (a * p.ln() + (1.0 - a) * (1.0 - p).ln())
                    })
                    .sum();
                dev / self.nrows() as f64
            }
            LossKind::SquaredError => self.loss_from_eta(&eta),
        })
    }

    /// Smallest λ at which every penalized coefficient is zero: the largest
    /// absolute gradient coordinate at the fit on unpenalized columns only,
    /// rounded up by a relative 1e-10 so the fit at λ_max is exactly null
    /// despite rounding in the coordinate updates.
    pub fn lambda_max(&self) -> f64 {
        let coef = self.null_fit();
        let grad = self.gradient(&coef).expect("dimensions checked at construction");
        let top = grad
            .iter()
            .enumerate()
            .filter(|(j, _)| self.x.is_penalized(*j))
            .map(|(_, g)| g.abs())
            .fold(0.0, f64::max);
        top * (1.0 + 1e-10)
    }

    /// Fit with every penalized coefficient held at zero.
    pub(crate) fn null_fit(&self) -> Vec<f64> {
        let p = self.ncols();
        let weights: Vec<f64> = (0..p)
            .map(|j| if self.x.is_penalized(j) { f64::INFINITY } else { 0.0 })
            .collect();
        let mut coef = vec![0.0; p];
        let mut trace = Vec::new();
        cd::solve_weighted(self, &weights, &mut coef, &SolverOptions::default(), &mut trace);
        coef
    }

    /// Fit at the λ carried by `spec`, starting from `warm` (zeros if absent).
    pub fn fit(&self, spec: &PenaltySpec, opts: &SolverOptions, warm: Option<&[f64]>) -> Result<FitResult> {
        let p = self.ncols();
        let start = match warm {
            Some(w) => {
                check_len("warm start", p, w.len())?;
                w.to_vec()
            }
            None => vec![0.0; p],
        };
        let lasso = self.fit_lasso_from(spec.lambda(), start, opts);
        Ok(self.refine(spec, lasso, opts))
    }

    /// Weighted-L1 solve with uniform weight λ on penalized coordinates.
    pub(crate) fn fit_lasso_from(&self, lambda: f64, mut coef: Vec<f64>, opts: &SolverOptions) -> LassoState {
        let weights: Vec<f64> = (0..self.ncols())
            .map(|j| if self.x.is_penalized(j) { lambda } else { 0.0 })
            .collect();
        let mut trace = Vec::new();
        let out = cd::solve_weighted(self, &weights, &mut coef, opts, &mut trace);
        LassoState { coef, sweeps: out.sweeps, converged: out.converged, trace }
    }

    /// LLA refinement of a LASSO solution for nonconvex penalties; for the
    /// LASSO itself this just packages the result. At most `opts.lla_steps`
    /// reweightings are taken; stopping at that cap is part of the estimator,
    /// so `converged` reports only whether every weighted solve converged.
    pub(crate) fn refine(&self, spec: &PenaltySpec, start: LassoState, opts: &SolverOptions) -> FitResult {
        let LassoState { mut coef, mut sweeps, mut converged, mut trace } = start;
        if !spec.is_convex() && spec.lambda() > 0.0 {
            for _ in 0..opts.lla_steps {
                if sweeps >= opts.max_sweeps {
                    break;
                }
                let weights: Vec<f64> = coef
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        if self.x.is_penalized(j) {
                            spec.derivative_unchecked(c.abs())
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let previous = coef.clone();
                let budget = SolverOptions { max_sweeps: opts.max_sweeps - sweeps, ..opts.clone() };
                let out = cd::solve_weighted(self, &weights, &mut coef, &budget, &mut trace);
                sweeps += out.sweeps;
                converged &= out.converged;
                let change = coef
                    .iter()
                    .zip(&previous)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if change < opts.tolerance {
                    break;
                }
            }
        }
        let objective = self
            .objective(&coef, spec)
            .expect("coefficient length matches design");
        FitResult {
            support: support_of(&coef),
            coefficients: coef,
            lambda: spec.lambda(),
            penalty: *spec,
            objective,
            iterations: sweeps,
            converged,
            trace: if opts.trace { trace } else { Vec::new() },
        }
    }

    /// Largest violation of the first-order conditions of the penalized
    /// objective at `fit`: |∇ⱼ + sign(cⱼ)ρ′(|cⱼ|)| on the support and
    /// (|∇ⱼ| − ρ′(0+))₊ off it.
    pub fn kkt_violation(&self, fit: &FitResult) -> Result<f64> {
        let grad = self.gradient(&fit.coefficients)?;
        let spec = &fit.penalty;
        let mut worst: f64 = 0.0;
        for (j, (&g, &c)) in grad.iter().zip(&fit.coefficients).enumerate() {
            let penalized = self.x.is_penalized(j);
            let v = if c != 0.0 {
                let d = if penalized { spec.derivative_unchecked(c.abs()) } else { 0.0 };
                (g + c.signum() * d).abs()
            } else if penalized {
                (g.abs() - spec.derivative_unchecked(0.0)).max(0.0)
            } else {
                g.abs()
            };
            worst = worst.max(v);
        }
        Ok(worst)
    }
}

#[derive(Clone)]
pub(crate) struct LassoState {
    pub(crate) coef: Vec<f64>,
    pub(crate) sweeps: usize,
    pub(crate) converged: bool,
    pub(crate) trace: Vec<Vec<f64>>,
}


/// Penalized logistic regression of a binary vector `a` on `x`.
pub fn fit_penalized_logistic(
    x: &DesignMatrix,
    a: &[f64],
    spec: &PenaltySpec,
    opts: &SolverOptions,
) -> Result<FitResult> {
    Problem::logistic(x.clone(), a.to_vec())?.fit(spec, opts, None)
}

/// Penalized least squares of `response` on `x`.
pub fn fit_penalized_ls(
    x: &DesignMatrix,
    response: &[f64],
    spec: &PenaltySpec,
    opts: &SolverOptions,
) -> Result<FitResult> {
    Problem::least_squares(x.clone(), response.to_vec())?.fit(spec, opts, None)
}

/// Fitted probabilities expit(Xα), clipped to `[lo, hi]`.
pub fn fitted_probabilities(x: &DesignMatrix, coef: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    Ok(x.mul_vec(coef)?
        .into_iter()
        .map(|e| expit(e).clamp(lo, hi))
        .collect())
}
