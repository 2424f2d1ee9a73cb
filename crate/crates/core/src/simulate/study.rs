use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_dataset, monte_carlo_values, DecisionRule, SimulatedData};
use super::metrics::{compute_metrics, ReplicateMetrics};
use super::scenario::SimulationScenario;
use crate::error::{Error, Result};
use crate::inference::infer_value;
use crate::regime::{fit_regime, PhiMode, PropensityKind, PropensityMode, RegimeOptions};
use crate::seed::derive_seed;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "OPTREGIME_THREADS";

const STREAM_DATA: u64 = 0;
const STREAM_FIT: u64 = 1;
const STREAM_VALUE: u64 = 2;

/// How each replicate is analysed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub regime: RegimeOptions,
    /// `Logistic` for the main study, `SampleProportion` for the
    /// misspecified-propensity sensitivity runs.
    pub propensity: PropensityKind,
    pub phi: PhiMode,
    /// Subjects per Monte-Carlo value evaluation.
    pub mc_subjects: usize,
    /// Also compute the value estimate, its CI and whether the CI covers Vₙ(β₀).
    pub inference: bool,
    /// Worker threads; `None` defers to `OPTREGIME_THREADS`, then to rayon.
    /// Not serialized: it cannot change results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            regime: RegimeOptions::default(),
            propensity: PropensityKind::Logistic,
            phi: PhiMode::Linear,
            mc_subjects: 10_000,
            inference: false,
            threads: None,
        }
    }
}

/// Value estimate of one replicate against the in-sample target Vₙ(β₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub v_hat: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub v_n_true: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub metrics: Option<ReplicateMetrics>,
    /// Monte-Carlo value of the estimated rule.
    pub value_hat: Option<f64>,
    /// Monte-Carlo value of the true optimal rule on the same draw.
    pub value_opt: Option<f64>,
    pub coverage: Option<CoverageRecord>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Aggregated metrics over the successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub l2_loss_beta: f64,
    pub l2_loss_alpha: Option<f64>,
    pub fn_beta: f64,
    pub fn_alpha: Option<f64>,
    pub num_selected_beta: f64,
    pub num_selected_alpha: Option<f64>,
    pub pcd: f64,
    pub value_hat_mean: f64,
    pub value_hat_sd: f64,
    pub value_opt_mean: f64,
    pub value_opt_sd: f64,
    pub ci_coverage: Option<f64>,
    pub replications: usize,
    pub failures: usize,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: SimulationScenario,
    pub options: StudyOptions,
    pub summary: MetricsSummary,
    pub replicates: Vec<ReplicateRecord>,
}

/// Vₙ(β₀) = (1/n) Σ [h₀(xᵢ) + β₀ᵀxᵢ · I(β₀ᵀxᵢ > 0)].
pub fn optimal_in_sample_value(sim: &SimulatedData) -> f64 {
    let n = sim.baseline.len() as f64;
    sim.baseline.iter().zip(&sim.contrast).map(|(h, c)| h + c.max(0.0)).sum::<f64>() / n
}

/// Scenario of replicate `index`: identical to `scn` but with its derived seed.
pub fn replicate_scenario(scn: &SimulationScenario, index: usize) -> SimulationScenario {
    let mut rep = scn.clone();
    rep.seed = derive_seed(derive_seed(scn.seed, index as u64), STREAM_DATA);
    rep
}

fn analyse(scn: &SimulationScenario, index: usize, opts: &StudyOptions) -> Result<ReplicateRecord> {
    let seed = derive_seed(scn.seed, index as u64);
    let sim = generate_dataset(&replicate_scenario(scn, index))?;
    let mut regime_opts = opts.regime.clone();
    regime_opts.seed = derive_seed(seed, STREAM_FIT);
    let mode = match opts.propensity {
        PropensityKind::Logistic => PropensityMode::Logistic,
        PropensityKind::SampleProportion => PropensityMode::SampleProportion,
        PropensityKind::Known => {
            let alpha0 = sim.truth.alpha0_dense();
            let pi = sim.raw_design.mul_vec(&alpha0)?.into_iter().map(crate::linalg::expit).collect();
            PropensityMode::Known(pi)
        }
    };
    let estimate = fit_regime(&sim.dataset, &regime_opts, &mode, opts.phi)?;
    let metrics = compute_metrics(&estimate, &sim.truth, sim.dataset.x())?;

    let rules = [DecisionRule::Linear(estimate.beta_raw()), DecisionRule::Linear(sim.truth.beta0_dense())];
    let values = monte_carlo_values(&rules, &sim.truth, opts.mc_subjects, derive_seed(seed, STREAM_VALUE))?;

    let coverage = if opts.inference {
        let est = infer_value(&sim.dataset, &estimate)?;
        let v_n_true = optimal_in_sample_value(&sim);
        Some(CoverageRecord {
            v_hat: est.v_hat,
            std_error: est.std_error,
            ci_lower: est.ci_lower,
            ci_upper: est.ci_upper,
            v_n_true,
            covered: est.ci_lower <= v_n_true && v_n_true <= est.ci_upper,
        })
    } else {
        None
    };

    Ok(ReplicateRecord {
        index,
        seed,
        metrics: Some(metrics),
        value_hat: Some(values[0].mean),
        value_opt: Some(values[1].mean),
        coverage,
        converged: estimate.converged,
        error: None,
    })
}

/// Runs replicate `index` of the study; failures are captured in the record.
pub fn run_replicate(scn: &SimulationScenario, index: usize, opts: &StudyOptions) -> ReplicateRecord {
    analyse(scn, index, opts).unwrap_or_else(|e| ReplicateRecord {
        index,
        seed: derive_seed(scn.seed, index as u64),
        metrics: None,
        value_hat: None,
        value_opt: None,
        coverage: None,
        converged: false,
        error: Some(e.to_string()),
    })
}

/// Thread count from the explicit option or `OPTREGIME_THREADS`.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok()).filter(|&t| t > 0)
}

/// Runs `f` inside a pool of `threads` workers (or the global pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match resolve_threads(threads) {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Numerical(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn mean_of<T>(items: &[&ReplicateMetrics], f: impl Fn(&ReplicateMetrics) -> Option<T>) -> Option<f64>
where
    T: Into<f64>,
{
    let vals: Option<Vec<f64>> = items.iter().map(|m| f(m).map(Into::into)).collect();
    vals.filter(|v| !v.is_empty()).map(|v| mean_sd(&v).0)
}

/// Aggregates records in index order.
pub fn summarize(records: &[ReplicateRecord]) -> MetricsSummary {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let metrics: Vec<&ReplicateMetrics> = ok.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let hat: Vec<f64> = ok.iter().filter_map(|r| r.value_hat).collect();
    let opt: Vec<f64> = ok.iter().filter_map(|r| r.value_opt).collect();
    let (value_hat_mean, value_hat_sd) = mean_sd(&hat);
    let (value_opt_mean, value_opt_sd) = mean_sd(&opt);
    let covered: Vec<f64> = ok.iter().filter_map(|r| r.coverage.as_ref()).map(|c| f64::from(u8::from(c.covered))).collect();
    let as_f64 = |v: usize| v as f64;
    MetricsSummary {
        l2_loss_beta: mean_of(&metrics, |m| Some(m.l2_loss_beta)).unwrap_or(f64::NAN),
        l2_loss_alpha: mean_of(&metrics, |m| m.l2_loss_alpha),
        fn_beta: mean_of(&metrics, |m| Some(as_f64(m.fn_beta))).unwrap_or(f64::NAN),
        fn_alpha: mean_of(&metrics, |m| m.fn_alpha.map(as_f64)),
        num_selected_beta: mean_of(&metrics, |m| Some(as_f64(m.num_selected_beta))).unwrap_or(f64::NAN),
        num_selected_alpha: mean_of(&metrics, |m| m.num_selected_alpha.map(as_f64)),
        pcd: mean_of(&metrics, |m| Some(m.pcd)).unwrap_or(f64::NAN),
        value_hat_mean,
        value_hat_sd,
        value_opt_mean,
        value_opt_sd,
        ci_coverage: (!covered.is_empty()).then(|| mean_sd(&covered).0),
        replications: ok.len(),
        failures: records.len() - ok.len(),
        nonconverged: ok.iter().filter(|r| !r.converged).count(),
    }
}

/// Runs `reps` independent replicates in parallel and aggregates them.
/// Replicate `r` depends only on the master seed and `r`, and results are
/// merged by index, so the report does not depend on scheduling.
pub fn run_study(scn: &SimulationScenario, reps: usize, opts: &StudyOptions) -> Result<StudyReport> {
    if reps == 0 {
        return Err(Error::domain("a study needs at least one replicate"));
    }
    scn.validate()?;
    let replicates: Vec<ReplicateRecord> =
        with_threads(opts.threads, || (0..reps).into_par_iter().map(|r| run_replicate(scn, r, opts)).collect())?;
    Ok(StudyReport { scenario: scn.clone(), options: opts.clone(), summary: summarize(&replicates), replicates })
}
