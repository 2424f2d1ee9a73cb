use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// h₀(x) = 1 + γ₁ᵀx
    I,
    /// h₀(x) = 1 + 0.5 (γ₁ᵀx)(γ₂ᵀx)
    II,
    /// h₀(x) = 1 + 0.5 sin(π γ₁ᵀx) + 0.25 (1 + γ₂ᵀx)²
    III,
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            other => Err(Error::domain(format!("unknown model '{other}' (expected I, II or III)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Independent standard normal covariates.
    Iid,
    /// Cov(xʲ, xᵏ) = ρ^|j−k|.
    Ar1 { rho: f64 },
}

impl Covariance {
    pub const DEFAULT_AR1: Covariance = Covariance::Ar1 { rho: 0.3 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Moderate,
    Large,
}

/// Sparse coefficient vector over covariates, positions 1-based
/// (position `j` is design column `j`, column 0 being the intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficients {
    pub positions: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCoefficients {
    pub fn new(positions: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::domain("sparse coefficients need one value per position"));
        }
        if positions.contains(&0) {
            return Err(Error::domain("sparse coefficient positions are 1-based"));
        }
        Ok(Self { positions, values })
    }

    pub fn max_position(&self) -> usize {
        self.positions.iter().copied().max().unwrap_or(0)
    }

    /// Dense design-length vector (intercept slot 0 left at zero).
    pub fn dense(&self, p_design: usize) -> Vec<f64> {
        let mut out = vec![0.0; p_design];
        for (&j, &v) in self.positions.iter().zip(&self.values) {
            out[j] += v;
        }
        out
    }

    /// Σ vⱼ x[j] over a design-indexed lookup.
    pub fn dot_with(&self, x: impl Fn(usize) -> f64) -> f64 {
        self.positions.iter().zip(&self.values).map(|(&j, v)| v * x(j)).sum()
    }
}

pub const ALPHA0_VALUES: [f64; 5] = [1.5, -1.0, 1.4, 0.8, -1.2];
pub const GAMMA1_VALUES: [f64; 5] = [0.5, -0.5, 0.5, -0.5, 0.5];
pub const GAMMA2_VALUES: [f64; 5] = [-0.5, 0.5, -0.5, 0.5, -0.5];
pub const BETA0_MODERATE: [f64; 5] = [0.8, -0.5, -0.6, 1.0, -0.6];
pub const BETA0_LARGE: [f64; 5] = [2.0, -1.3, 1.5, -1.2, 1.0];

pub const ALPHA0_POSITIONS_IID: [usize; 5] = [1, 2, 3, 4, 5];
pub const BETA0_POSITIONS_IID: [usize; 5] = [1, 2, 6, 7, 8];
pub const ALPHA0_POSITIONS_AR1: [usize; 5] = [1, 2, 9, 10, 50];
pub const BETA0_POSITIONS_AR1: [usize; 5] = [1, 2, 15, 16, 100];
/// Baseline covariates, disjoint from and (under AR(1)) nearly uncorrelated
/// with the propensity and contrast covariates.
pub const GAMMA_POSITIONS: [usize; 5] = [20, 30, 40, 60, 70];

/// Default standard deviation of the Gaussian outcome noise.
pub const SIGMA_NOISE_DEFAULT: f64 = 0.5;

/// Generating parameters for one simulated study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub model: Model,
    pub n: usize,
    /// Number of covariates, excluding the intercept.
    pub p: usize,
    pub covariance: Covariance,
    pub signal: Signal,
    pub alpha0: SparseCoefficients,
    pub beta0: SparseCoefficients,
    pub gamma1: SparseCoefficients,
    pub gamma2: SparseCoefficients,
    pub sigma_noise: f64,
    pub seed: u64,
    /// Standardize design columns before fitting.
    pub standardize: bool,
}

impl SimulationScenario {
    /// The standard coefficient layout for the given model, covariance and signal.
    pub fn new(model: Model, n: usize, p: usize, covariance: Covariance, signal: Signal, seed: u64) -> Self {
        let (alpha_pos, beta_pos) = match covariance {
            Covariance::Iid => (ALPHA0_POSITIONS_IID, BETA0_POSITIONS_IID),
            Covariance::Ar1 { .. } => (ALPHA0_POSITIONS_AR1, BETA0_POSITIONS_AR1),
        };
        let beta_values = match signal {
            Signal::Moderate => BETA0_MODERATE,
            Signal::Large => BETA0_LARGE,
        };
        Self {
            model,
            n,
            p,
            covariance,
            signal,
            alpha0: SparseCoefficients { positions: alpha_pos.to_vec(), values: ALPHA0_VALUES.to_vec() },
            beta0: SparseCoefficients { positions: beta_pos.to_vec(), values: beta_values.to_vec() },
            gamma1: SparseCoefficients { positions: GAMMA_POSITIONS.to_vec(), values: GAMMA1_VALUES.to_vec() },
            gamma2: SparseCoefficients { positions: GAMMA_POSITIONS.to_vec(), values: GAMMA2_VALUES.to_vec() },
            sigma_noise: SIGMA_NOISE_DEFAULT,
            seed,
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain("scenario needs n >= 2"));
        }
        let largest = [&self.alpha0, &self.beta0, &self.gamma1, &self.gamma2]
            .iter()
            .map(|c| c.max_position())
            .max()
            .unwrap_or(0);
        if self.p < largest {
            return Err(Error::domain(format!(
                "p = {} is smaller than the largest support index {largest}",
                self.p
            )));
        }
        if !(self.sigma_noise >= 0.0 && self.sigma_noise.is_finite()) {
            return Err(Error::domain("sigma_noise must be finite and >= 0"));
        }
        if let Covariance::Ar1 { rho } = self.covariance {
            if !(rho.abs() < 1.0) {
                return Err(Error::domain("AR(1) correlation must lie in (-1, 1)"));
            }
        }
        Ok(())
    }
}
