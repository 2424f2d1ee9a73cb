use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scenario::{Covariance, Model, SimulationScenario, SparseCoefficients};
use crate::error::Result;
use crate::linalg::expit;
use crate::regime::Dataset;
use crate::seed::derive_seed;
use crate::solver::DesignMatrix;

const STREAM_COVARIATES: u64 = 10;
const STREAM_TREATMENT: u64 = 11;
const STREAM_NOISE: u64 = 12;

/// Ground truth of a scenario: the data-generating coefficients and the
/// covariate law, enough to evaluate h₀ and β₀ᵀx on fresh draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: Model,
    pub covariance: Covariance,
    /// Number of covariates (design has `p + 1` columns).
    pub p: usize,
    pub sigma_noise: f64,
    pub alpha0: SparseCoefficients,
    pub beta0: SparseCoefficients,
    pub gamma1: SparseCoefficients,
    pub gamma2: SparseCoefficients,
}

impl Truth {
    pub fn from_scenario(scn: &SimulationScenario) -> Self {
        Self {
            model: scn.model,
            covariance: scn.covariance,
            p: scn.p,
            sigma_noise: scn.sigma_noise,
            alpha0: scn.alpha0.clone(),
            beta0: scn.beta0.clone(),
            gamma1: scn.gamma1.clone(),
            gamma2: scn.gamma2.clone(),
        }
    }

    /// α₀ as a design-length vector (intercept first).
    pub fn alpha0_dense(&self) -> Vec<f64> {
        self.alpha0.dense(self.p + 1)
    }

    /// β₀ as a design-length vector (intercept first).
    pub fn beta0_dense(&self) -> Vec<f64> {
        self.beta0.dense(self.p + 1)
    }

    /// h₀ at a covariate point given by a design-indexed lookup.
    pub fn baseline(&self, x: impl Fn(usize) -> f64) -> f64 {
        let g1 = self.gamma1.dot_with(&x);
        match self.model {
            Model::I => 1.0 + g1,
            Model::II => 1.0 + 0.5 * g1 * self.gamma2.dot_with(&x),
            Model::III => {
                let g2 = self.gamma2.dot_with(&x);
                1.0 + 0.5 * (std::f64::consts::PI * g1).sin() + 0.25 * (1.0 + g2).powi(2)
            }
        }
    }

    /// β₀ᵀx for a design-indexed lookup.
    pub fn contrast(&self, x: impl Fn(usize) -> f64) -> f64 {
        self.beta0.dot_with(x)
    }

    /// Design columns any of the true coefficient vectors touch.
    pub(crate) fn active_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = [&self.alpha0, &self.beta0, &self.gamma1, &self.gamma2]
            .iter()
            .flat_map(|c| c.positions.iter().copied())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

/// A generated dataset together with its truth and the raw (unstandardized)
/// design it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub raw_design: DesignMatrix,
    pub truth: Truth,
    /// h₀(xᵢ) for each training row.
    pub baseline: Vec<f64>,
    /// β₀ᵀxᵢ for each training row.
    pub contrast: Vec<f64>,
}

/// Draws selected covariate columns for `m` subjects.
///
/// Column `j` is driven by its own innovation stream, so a column's values do
/// not depend on which other columns are requested. Under AR(1) the chain
/// xʲ = ρxʲ⁻¹ + √(1−ρ²)eʲ is run up to the largest requested column.
pub(crate) fn sample_columns(covariance: Covariance, m: usize, columns: &[usize], seed: u64) -> Vec<Vec<f64>> {
    let innovations = |j: usize| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, j as u64));
        (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    match covariance {
        Covariance::Iid => columns.iter().map(|&j| innovations(j)).collect(),
        Covariance::Ar1 { rho } => {
            let top = columns.iter().copied().max().unwrap_or(0);
            let keep = (1.0 - rho * rho).sqrt();
            let mut out: Vec<Option<Vec<f64>>> = vec![None; columns.len()];
            let mut current = vec![0.0; m];
            for j in 1..=top {
                let e = innovations(j);
                if j == 1 {
                    current = e;
                } else {
                    for (c, e) in current.iter_mut().zip(&e) {
                        *c = rho * *c + keep * e;
                    }
                }
                for (slot, _) in columns.iter().enumerate().filter(|(_, &c)| c == j) {
                    out[slot] = Some(current.clone());
                }
            }
            out.into_iter().map(|c| c.expect("requested column is 1-based and sampled")).collect()
        }
    }
}

/// Draws one dataset from the scenario.
pub fn generate_dataset(scn: &SimulationScenario) -> Result<SimulatedData> {
    scn.validate()?;
    let (n, p) = (scn.n, scn.p);
    let columns: Vec<usize> = (1..=p).collect();
    let cols = sample_columns(scn.covariance, n, &columns, derive_seed(scn.seed, STREAM_COVARIATES));

    let mut values = Vec::with_capacity(n * (p + 1));
    values.extend(std::iter::repeat_n(1.0, n));
    for c in &cols {
        values.extend_from_slice(c);
    }
    let raw_design = DesignMatrix::from_column_major(n, p + 1, values)?.mark_intercept()?;
    let truth = Truth::from_scenario(scn);

    let mut treat_rng = ChaCha8Rng::seed_from_u64(derive_seed(scn.seed, STREAM_TREATMENT));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(scn.seed, STREAM_NOISE));
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut baseline = Vec::with_capacity(n);
    let mut contrast = Vec::with_capacity(n);
    for i in 0..n {
        let x = |j: usize| raw_design.get(i, j);
        let prob = expit(truth.alpha0.dot_with(x));
        let ai = f64::from(u8::from(treat_rng.random::<f64>() < prob));
        let h = truth.baseline(x);
        let c = truth.contrast(x);
        let eps: f64 = noise_rng.sample(StandardNormal);
        y.push(h + ai * c + scn.sigma_noise * eps);
        a.push(ai);
        baseline.push(h);
        contrast.push(c);
    }

    let design = if scn.standardize { raw_design.standardize() } else { raw_design.clone() };
    let names = std::iter::once("intercept".to_string()).chain((1..=p).map(|j| format!("x{j}"))).collect();
    let dataset = Dataset::new(y, a, design)?.with_feature_names(names)?;
    Ok(SimulatedData { dataset, raw_design, truth, baseline, contrast })
}

/// A treatment rule evaluated on raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Everyone gets the same arm.
    Constant(u8),
    /// Treat iff βᵀx > 0 with β in raw design units (intercept first).
    Linear(Vec<f64>),
}

impl DecisionRule {
    fn columns(&self) -> Vec<usize> {
        match self {
            DecisionRule::Constant(_) => Vec::new(),
            DecisionRule::Linear(beta) => (1..beta.len()).filter(|&j| beta[j] != 0.0).collect(),
        }
    }

    fn decide(&self, x: impl Fn(usize) -> f64) -> f64 {
        match self {
            DecisionRule::Constant(a) => f64::from(*a),
            DecisionRule::Linear(beta) => {
                let score: f64 = beta[0] + (1..beta.len()).filter(|&j| beta[j] != 0.0).map(|j| beta[j] * x(j)).sum::<f64>();
                f64::from(u8::from(score > 0.0))
            }
        }
    }
}

/// Sample mean and standard deviation of simulated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueDraw {
    pub mean: f64,
    pub sd: f64,
}

/// Monte-Carlo value of several rules on one shared draw of `m` subjects
/// (common covariates and noise, so differences between rules are not
/// blurred by sampling error).
pub fn monte_carlo_values(rules: &[DecisionRule], truth: &Truth, m: usize, seed: u64) -> Result<Vec<ValueDraw>> {
    if m == 0 {
        return Err(crate::error::Error::domain("Monte-Carlo sample size must be >= 1"));
    }
    for rule in rules {
        if let DecisionRule::Linear(beta) = rule {
            crate::error::check_len("rule coefficients", truth.p + 1, beta.len())?;
        }
    }
    let mut columns = truth.active_columns();
    columns.extend(rules.iter().flat_map(|r| r.columns()));
    columns.sort_unstable();
    columns.dedup();
    let drawn = sample_columns(truth.covariance, m, &columns, derive_seed(seed, STREAM_COVARIATES));
    let mut slot = vec![usize::MAX; truth.p + 1];
    for (k, &j) in columns.iter().enumerate() {
        slot[j] = k;
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_NOISE));
    let mut sums = vec![(0.0, 0.0); rules.len()];
    for i in 0..m {
        let x = |j: usize| if j == 0 { 1.0 } else { drawn[slot[j]][i] };
        let h = truth.baseline(x);
        let c = truth.contrast(x);
        let eps: f64 = noise_rng.sample(StandardNormal);
        for (rule, acc) in rules.iter().zip(sums.iter_mut()) {
            let yi = h + rule.decide(x) * c + truth.sigma_noise * eps;
            acc.0 += yi;
            acc.1 += yi * yi;
        }
    }
    let mf = m as f64;
    Ok(sums
        .into_iter()
        .map(|(s, ss)| {
            let mean = s / mf;
            let var = if m > 1 { ((ss - mf * mean * mean) / (mf - 1.0)).max(0.0) } else { 0.0 };
            ValueDraw { mean, sd: var.sqrt() }
        })
        .collect())
}

/// Monte-Carlo value of a single rule.
pub fn monte_carlo_value(rule: &DecisionRule, truth: &Truth, m: usize, seed: u64) -> Result<ValueDraw> {
    Ok(monte_carlo_values(std::slice::from_ref(rule), truth, m, seed)?[0])
}
