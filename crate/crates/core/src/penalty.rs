//! Folded-concave penalties ρ(t, λ) for sparse estimation.
//!
//! Every family here is nondecreasing and concave in `t ≥ 0`, has a continuous
//! derivative away from its kinks, and satisfies ρ′(0+, λ) = λ. Kinks are
//! resolved by taking the right-hand limit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default SCAD concavity parameter `a`.
pub const SCAD_DEFAULT_SHAPE: f64 = 3.7;
/// Default MCP concavity parameter `γ`.
pub const MCP_DEFAULT_SHAPE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Lasso,
    Scad,
    Mcp,
}

impl PenaltyFamily {
    pub fn default_shape(self) -> f64 {
        match self {
            PenaltyFamily::Lasso => 0.0,
            PenaltyFamily::Scad => SCAD_DEFAULT_SHAPE,
            PenaltyFamily::Mcp => MCP_DEFAULT_SHAPE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PenaltyFamily::Lasso => "lasso",
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::Mcp => "mcp",
        }
    }
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lasso" => Ok(PenaltyFamily::Lasso),
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            other => Err(Error::domain(format!(
                "unknown penalty family '{other}' (expected lasso, scad or mcp)"
            ))),
        }
    }
}

/// A penalty family together with its regularization level and shape.
///
/// Construct through [`PenaltySpec::new`], which enforces `λ ≥ 0`, `a > 2`
/// for SCAD and `γ > 1` for MCP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    family: PenaltyFamily,
    lambda: f64,
    shape: f64,
}

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, lambda: f64, shape: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::domain(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        match family {
            PenaltyFamily::Scad if !(shape > 2.0 && shape.is_finite()) => {
                return Err(Error::domain(format!("SCAD shape must exceed 2, got {shape}")))
            }
            PenaltyFamily::Mcp if !(shape > 1.0 && shape.is_finite()) => {
                return Err(Error::domain(format!("MCP shape must exceed 1, got {shape}")))
            }
            _ => {}
        }
        Ok(Self { family, lambda, shape })
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Lasso, lambda, 0.0)
    }

    pub fn scad(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, lambda, SCAD_DEFAULT_SHAPE)
    }

    pub fn mcp(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Mcp, lambda, MCP_DEFAULT_SHAPE)
    }

    /// Same family and shape at a different regularization level.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.family, lambda, self.shape)
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Whether the penalty is convex (LASSO), in which case a single weighted
    /// L1 solve is exact and no local linear approximation is needed.
    pub fn is_convex(&self) -> bool {
        self.family == PenaltyFamily::Lasso
    }

    /// ρ(t, λ) for `t ≥ 0`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_t(t)?;
        Ok(self.value_unchecked(t))
    }

    /// ρ′(t, λ) for `t ≥ 0`; at `t = 0` this is the right limit ρ′(0+).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        check_t(t)?;
        Ok(self.derivative_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::Lasso => lam * t,
            PenaltyFamily::Scad => {
                let a = self.shape;
                if t <= lam {
                    lam * t
                } else if t <= a * lam {
                    (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    lam * lam * (a + 1.0) / 2.0
                }
            }
            PenaltyFamily::Mcp => {
                let g = self.shape;
                if t <= g * lam {
                    lam * t - t * t / (2.0 * g)
                } else {
                    g * lam * lam / 2.0
                }
            }
        }
    }

    pub(crate) fn derivative_unchecked(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::Lasso => lam,
            PenaltyFamily::Scad => {
                let a = self.shape;
                if t <= lam {
                    lam
                } else {
                    ((a * lam - t).max(0.0)) / (a - 1.0)
                }
            }
            PenaltyFamily::Mcp => (lam - t / self.shape).max(0.0),
        }
    }

    /// Σⱼ ρ(|cⱼ|) over the penalized coordinates (`penalized[j] == true`).
    pub(crate) fn total(&self, coef: &[f64], penalized: &[bool]) -> f64 {
        coef.iter()
            .zip(penalized)
            .filter(|(_, &p)| p)
            .map(|(c, _)| self.value_unchecked(c.abs()))
            .sum()
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        Err(Error::domain(format!("penalty argument must be >= 0, got {t}")))
    } else {
        Ok(())
    }
}

/// Free-function form of [`PenaltySpec::value`].
pub fn penalty_value(spec: &PenaltySpec, t: f64) -> Result<f64> {
    spec.value(t)
}

/// Free-function form of [`PenaltySpec::derivative`].
pub fn penalty_derivative(spec: &PenaltySpec, t: f64) -> Result<f64> {
    spec.derivative(t)
}

/// Outcome of a numerical check of the folded-concave conditions on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// ρ(·, λ) is nondecreasing along the grid.
    pub value_nondecreasing: bool,
    /// ρ′(·, λ) is nonincreasing along the grid (concavity).
    pub derivative_nonincreasing: bool,
    /// ρ′(t, ·) is nondecreasing in λ at every grid point.
    pub derivative_nondecreasing_in_lambda: bool,
    /// ρ(0) = 0 and ρ′(0+) > 0.
    pub origin: bool,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.value_nondecreasing
            && self.derivative_nonincreasing
            && self.derivative_nondecreasing_in_lambda
            && self.origin
    }
}

const AUDIT_TOL: f64 = 1e-12;
const AUDIT_LAMBDA_FACTORS: [f64; 4] = [1.1, 1.5, 2.0, 4.0];

/// Checks the folded-concave conditions for `spec` on an ascending grid of `t`.
pub fn condition1_audit(spec: &PenaltySpec, grid: &[f64]) -> Result<AuditReport> {
    if grid.is_empty() {
        return Err(Error::domain("audit grid is empty"));
    }
    if grid.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::domain("audit grid must contain nonnegative values"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("audit grid must be sorted ascending"));
    }

    let values: Vec<f64> = grid.iter().map(|&t| spec.value_unchecked(t)).collect();
    let derivs: Vec<f64> = grid.iter().map(|&t| spec.derivative_unchecked(t)).collect();

    let value_nondecreasing = values.windows(2).all(|w| w[1] >= w[0] - AUDIT_TOL);
    let derivative_nonincreasing = derivs.windows(2).all(|w| w[1] <= w[0] + AUDIT_TOL);

    let mut derivative_nondecreasing_in_lambda = true;
    let mut previous = derivs.clone();
    for factor in AUDIT_LAMBDA_FACTORS {
        let larger = spec.with_lambda(spec.lambda() * factor)?;
        let next: Vec<f64> = grid.iter().map(|&t| larger.derivative_unchecked(t)).collect();
        if next.iter().zip(&previous).any(|(hi, lo)| *hi < lo - AUDIT_TOL) {
            derivative_nondecreasing_in_lambda = false;
        }
        previous = next;
    }

    let origin = spec.value_unchecked(0.0) == 0.0 && spec.derivative_unchecked(0.0) > 0.0;

    Ok(AuditReport {
        value_nondecreasing,
        derivative_nonincreasing,
        derivative_nondecreasing_in_lambda,
        origin,
    })
}
