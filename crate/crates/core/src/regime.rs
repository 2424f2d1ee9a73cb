//! The two-step regime estimator.
//!
//! Step 1 fits a sparse logistic propensity model α̂ and a sparse linear
//! working model θ̂ for E[Y | X]. Step 2 regresses the residual Y − Φ̂ on the
//! rows (A − π̂)·x with a folded-concave penalty to obtain the contrast β̂.
//! The estimated regime treats x iff β̂ᵀx > 0.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::penalty::{PenaltyFamily, PenaltySpec};
use crate::seed::derive_seed;
use crate::solver::{fit_cv, fitted_probabilities, CvReport, DesignMatrix, FitResult, Problem, SolverOptions};

/// Bounds applied to every propensity estimate before residualization.
pub const PROPENSITY_BOUNDS: (f64, f64) = (0.01, 0.99);

/// Observed (Y, A, X).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<f64>,
    x: DesignMatrix,
    #[serde(default)]
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, a: Vec<f64>, x: DesignMatrix) -> Result<Self> {
        let n = x.nrows();
        check_len("response", n, y.len())?;
        check_len("treatment", n, a.len())?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("response is not finite at row {i}")));
        }
        if let Some(i) = a.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::domain(format!("treatment must be 0/1, found {} at row {i}", a[i])));
        }
        Ok(Self { y, a, x, feature_names: Vec::new() })
    }

    /// Attaches one name per design column (intercept included).
    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        check_len("feature names", self.x.ncols(), names.len())?;
        self.feature_names = names;
        Ok(self)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn treated_fraction(&self) -> f64 {
        self.a.iter().sum::<f64>() / self.n() as f64
    }
}

/// How π̂ is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "values")]
pub enum PropensityMode {
    /// Penalized logistic regression of A on X.
    Logistic,
    /// π̂ᵢ = Σ Aᵢ / n for every subject.
    SampleProportion,
    /// Caller-supplied propensities, each strictly inside (0, 1).
    Known(Vec<f64>),
}

/// Which [`PropensityMode`] produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityKind {
    Logistic,
    SampleProportion,
    Known,
}

impl PropensityMode {
    pub fn kind(&self) -> PropensityKind {
        match self {
            PropensityMode::Logistic => PropensityKind::Logistic,
            PropensityMode::SampleProportion => PropensityKind::SampleProportion,
            PropensityMode::Known(_) => PropensityKind::Known,
        }
    }
}

/// Working model Φ(x, θ) for the conditional mean of Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// Φ(x, θ) = xᵀθ fitted by penalized least squares.
    Linear,
    /// Φ ≡ 0.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    /// K-fold cross-validation on the default grid.
    Cv,
}

/// Penalty configuration for one estimation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePenalty {
    pub family: PenaltyFamily,
    pub shape: f64,
    pub lambda: LambdaChoice,
}

impl StagePenalty {
    pub fn cv(family: PenaltyFamily) -> Self {
        Self { family, shape: family.default_shape(), lambda: LambdaChoice::Cv }
    }

    pub fn fixed(family: PenaltyFamily, lambda: f64) -> Self {
        Self { family, shape: family.default_shape(), lambda: LambdaChoice::Fixed(lambda) }
    }

    fn template(&self) -> Result<PenaltySpec> {
        let lambda = match self.lambda {
            LambdaChoice::Fixed(l) => l,
            LambdaChoice::Cv => 0.0,
        };
        PenaltySpec::new(self.family, lambda, self.shape)
    }
}

/// Everything `fit_regime` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeOptions {
    pub propensity_penalty: StagePenalty,
    pub outcome_penalty: StagePenalty,
    pub contrast_penalty: StagePenalty,
    pub cv_folds: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        Self {
            propensity_penalty: StagePenalty::cv(PenaltyFamily::Scad),
            outcome_penalty: StagePenalty::cv(PenaltyFamily::Scad),
            contrast_penalty: StagePenalty::cv(PenaltyFamily::Scad),
            cv_folds: 10,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl RegimeOptions {
    /// Same family for all three stages, every λ cross-validated.
    pub fn with_family(family: PenaltyFamily) -> Self {
        Self {
            propensity_penalty: StagePenalty::cv(family),
            outcome_penalty: StagePenalty::cv(family),
            contrast_penalty: StagePenalty::cv(family),
            ..Self::default()
        }
    }
}

/// A penalized fit plus its cross-validation record when λ was tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFit {
    pub fit: FitResult,
    pub cv: Option<CvReport>,
}

/// Output of the two-step estimator. Coefficients are on the internal
/// (possibly standardized) design scale; use the `*_raw` accessors for raw
/// covariate units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEstimate {
    /// Absent unless π̂ came from the logistic model.
    pub alpha_hat: Option<StageFit>,
    /// Absent when Φ ≡ 0.
    pub theta_hat: Option<StageFit>,
    pub beta_hat: StageFit,
    pub propensity_mode: PropensityKind,
    pub phi_mode: PhiMode,
    pub pi_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    /// Column scales of the design the fit was computed on.
    pub scales: Vec<f64>,
    pub converged: bool,
}

impl RegimeEstimate {
    pub fn beta(&self) -> &[f64] {
        &self.beta_hat.fit.coefficients
    }

    pub fn beta_raw(&self) -> Vec<f64> {
        to_raw(self.beta(), &self.scales)
    }

    pub fn alpha_raw(&self) -> Option<Vec<f64>> {
        self.alpha_hat.as_ref().map(|s| to_raw(&s.fit.coefficients, &self.scales))
    }

    pub fn theta_raw(&self) -> Option<Vec<f64>> {
        self.theta_hat.as_ref().map(|s| to_raw(&s.fit.coefficients, &self.scales))
    }

    /// Treatment recommendation for a raw covariate row (intercept included).
    pub fn decide_raw(&self, x_raw: &[f64]) -> Result<u8> {
        decide(&self.beta_raw(), x_raw)
    }
}

fn to_raw(coef: &[f64], scales: &[f64]) -> Vec<f64> {
    coef.iter().zip(scales).map(|(c, s)| c / s).collect()
}

/// The regime I(βᵀx > 0); a zero score maps to control.
pub fn decide(beta: &[f64], x: &[f64]) -> Result<u8> {
    check_len("covariate row", beta.len(), x.len())?;
    let score: f64 = beta.iter().zip(x).map(|(b, v)| b * v).sum();
    Ok(u8::from(score > 0.0))
}

/// Step-2 design Z = diag(A − π̂)·X and response r = Y − Φ̂. Z keeps column 0
/// unpenalized when X has an intercept and is not re-standardized.
pub fn residualize(data: &Dataset, pi_hat: &[f64], phi_hat: &[f64]) -> Result<(DesignMatrix, Vec<f64>)> {
    let n = data.n();
    check_len("propensity vector", n, pi_hat.len())?;
    check_len("working-model fit", n, phi_hat.len())?;
    let w: Vec<f64> = data.a.iter().zip(pi_hat).map(|(a, p)| a - p).collect();
    let z = data.x.scale_rows(&w)?;
    let r = data.y.iter().zip(phi_hat).map(|(y, f)| y - f).collect();
    Ok((z, r))
}

fn fit_stage(problem: &Problem, stage: &StagePenalty, folds: usize, seed: u64, opts: &SolverOptions) -> Result<StageFit> {
    let template = stage.template()?;
    match stage.lambda {
        LambdaChoice::Fixed(_) => Ok(StageFit { fit: problem.fit(&template, opts, None)?, cv: None }),
        LambdaChoice::Cv => {
            let (fit, report) = fit_cv(problem, &template, folds, None, seed, opts)?;
            Ok(StageFit { fit, cv: Some(report) })
        }
    }
}

const STREAM_PROPENSITY: u64 = 1;
const STREAM_OUTCOME: u64 = 2;
const STREAM_CONTRAST: u64 = 3;

/// Step 2 alone: penalized least squares of Y − Φ̂ on diag(A − π̂)X.
pub fn fit_contrast(data: &Dataset, pi_hat: &[f64], phi_hat: &[f64], opts: &RegimeOptions) -> Result<StageFit> {
    let (z, r) = residualize(data, pi_hat, phi_hat)?;
    let problem = Problem::least_squares(z, r)?;
    fit_stage(
        &problem,
        &opts.contrast_penalty,
        opts.cv_folds,
        derive_seed(opts.seed, STREAM_CONTRAST),
        &opts.solver,
    )
}

/// Propensity estimates for `mode`, clipped to [`PROPENSITY_BOUNDS`].
fn propensity(data: &Dataset, mode: &PropensityMode, opts: &RegimeOptions) -> Result<(Vec<f64>, Option<StageFit>)> {
    let (lo, hi) = PROPENSITY_BOUNDS;
    match mode {
        PropensityMode::Logistic => {
            let problem = Problem::logistic(data.x.clone(), data.a.clone())?;
            let stage = fit_stage(
                &problem,
                &opts.propensity_penalty,
                opts.cv_folds,
                derive_seed(opts.seed, STREAM_PROPENSITY),
                &opts.solver,
            )?;
            let pi = fitted_probabilities(&data.x, &stage.fit.coefficients, lo, hi)?;
            Ok((pi, Some(stage)))
        }
        PropensityMode::SampleProportion => {
            let share = data.treated_fraction().clamp(lo, hi);
            Ok((vec![share; data.n()], None))
        }
        PropensityMode::Known(values) => {
            check_len("known propensities", data.n(), values.len())?;
            if let Some(i) = values.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::domain(format!(
                    "known propensity must lie in (0, 1), found {} at row {i}",
                    values[i]
                )));
            }
            Ok((values.iter().map(|v| v.clamp(lo, hi)).collect(), None))
        }
    }
}

fn outcome(data: &Dataset, phi: PhiMode, opts: &RegimeOptions) -> Result<(Vec<f64>, Option<StageFit>)> {
    match phi {
        PhiMode::Zero => Ok((vec![0.0; data.n()], None)),
        PhiMode::Linear => {
            let problem = Problem::least_squares(data.x.clone(), data.y.clone())?;
            let stage = fit_stage(
                &problem,
                &opts.outcome_penalty,
                opts.cv_folds,
                derive_seed(opts.seed, STREAM_OUTCOME),
                &opts.solver,
            )?;
            let phi_hat = data.x.mul_vec(&stage.fit.coefficients)?;
            Ok((phi_hat, Some(stage)))
        }
    }
}

/// Runs the full two-step estimator.
pub fn fit_regime(data: &Dataset, opts: &RegimeOptions, mode: &PropensityMode, phi: PhiMode) -> Result<RegimeEstimate> {
    let (prop, out) = rayon::join(|| propensity(data, mode, opts), || outcome(data, phi, opts));
    let (pi_hat, alpha_hat) = prop?;
    let (phi_hat, theta_hat) = out?;
    let beta_hat = fit_contrast(data, &pi_hat, &phi_hat, opts)?;
    let converged = beta_hat.fit.converged
        && alpha_hat.as_ref().is_none_or(|s| s.fit.converged)
        && theta_hat.as_ref().is_none_or(|s| s.fit.converged);
    Ok(RegimeEstimate {
        alpha_hat,
        theta_hat,
        beta_hat,
        propensity_mode: mode.kind(),
        phi_mode: phi,
        pi_hat,
        phi_hat,
        scales: data.x.scales().to_vec(),
        converged,
    })
}
