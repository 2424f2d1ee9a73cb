//! Two-step penalized A-learning for optimal binary treatment regimes.
//!
//! The estimator fits a sparse logistic propensity model and a sparse linear
//! working model for the conditional mean, residualizes the response, and then
//! fits a sparse treatment-covariate contrast β whose sign rule I(βᵀx > 0) is
//! the estimated regime. Around it sit value-function inference, a simulation
//! harness for the standard Models I–III study, and a command-line front end.

pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod penalty;
pub mod regime;
pub mod seed;
pub mod simulate;
pub mod solver;

mod linalg;

pub use error::{Error, Result};
pub use penalty::{PenaltyFamily, PenaltySpec};
pub use solver::{DesignMatrix, FitResult, Problem, SolverOptions};
pub use regime::{fit_regime, Dataset, PhiMode, PropensityMode, RegimeEstimate, RegimeOptions};
