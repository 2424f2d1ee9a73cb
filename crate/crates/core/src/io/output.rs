use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::Result;
use crate::regime::RegimeEstimate;
use crate::simulate::{MetricsSummary, StudyReport};

/// Version of every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Wraps a payload with the schema version and the producing command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub command: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(command: &str, body: T) -> Self {
        Self { schema_version: SCHEMA_VERSION, command: command.to_string(), body }
    }
}

/// Coefficients on the raw covariate scale, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCoefficients {
    pub beta: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
}

/// How the training table was read, so later commands can reread data the
/// same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataLayout {
    pub response_col: String,
    pub treatment_col: String,
    pub feature_cols: Vec<String>,
    pub add_intercept: bool,
    pub standardize: bool,
}

/// Output of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// One name per design column.
    pub feature_names: Vec<String>,
    pub coefficients: RawCoefficients,
    /// Names of the covariates with a nonzero contrast coefficient.
    pub selected_beta: Vec<String>,
    pub converged: bool,
    pub layout: DataLayout,
    pub config: RunConfig,
    /// Full estimate on the internal (standardized) scale.
    pub estimate: RegimeEstimate,
}

impl FitReport {
    pub fn new(estimate: RegimeEstimate, feature_names: Vec<String>, layout: DataLayout, config: RunConfig) -> Self {
        let beta = estimate.beta_raw();
        let selected_beta = beta
            .iter()
            .zip(&feature_names)
            .filter(|(b, _)| **b != 0.0)
            .map(|(_, n)| n.clone())
            .collect();
        Self {
            coefficients: RawCoefficients { beta, alpha: estimate.alpha_raw(), theta: estimate.theta_raw() },
            selected_beta,
            converged: estimate.converged,
            feature_names,
            layout,
            config,
            estimate,
        }
    }
}

/// Serializes `value` as pretty JSON to `out`, or stdout when `None`.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn paired(main: f64, side: Option<f64>) -> String {
    match side {
        Some(s) => format!("{main:.3}({s:.3})"),
        None => format!("{main:.3}"),
    }
}

/// A study summary laid out like the published tables: one row per
/// measure, contrast values first and propensity values in parentheses.
pub fn write_summary_table(writer: impl Write, label: &str, n: usize, summary: &MetricsSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["measure", "n", label])?;
    let n = n.to_string();
    let rows = [
        ("L2 loss", paired(summary.l2_loss_beta, summary.l2_loss_alpha)),
        ("FN", paired(summary.fn_beta, summary.fn_alpha)),
        ("#S", paired(summary.num_selected_beta, summary.num_selected_alpha)),
        ("PCD", format!("{:.3}", summary.pcd)),
        ("E Y*(d_hat)", paired(summary.value_hat_mean, Some(summary.value_hat_sd))),
        ("E Y*(d_opt)", paired(summary.value_opt_mean, Some(summary.value_opt_sd))),
    ];
    for (measure, value) in rows {
        w.write_record([measure, n.as_str(), value.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Label such as `model_I_large_iid` for a study's table column.
pub fn study_label(report: &StudyReport) -> String {
    let s = &report.scenario;
    let cov = match s.covariance {
        crate::simulate::Covariance::Iid => "iid",
        crate::simulate::Covariance::Ar1 { .. } => "ar1",
    };
    let signal = match s.signal {
        crate::simulate::Signal::Moderate => "moderate",
        crate::simulate::Signal::Large => "large",
    };
    format!("model_{:?}_{signal}_{cov}", s.model)
}
