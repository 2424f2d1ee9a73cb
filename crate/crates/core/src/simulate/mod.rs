//! Simulation study: scenario generators, per-replicate metrics,
//! Monte-Carlo value evaluation, the parallel replication runner and the
//! deviation-bound scaling experiment.

mod deviation;
mod generate;
mod metrics;
mod scenario;
mod study;

pub use deviation::{deviation_experiment, DeviationCell, DeviationConfig, DeviationReport, NoiseKind};
pub use generate::{generate_dataset, monte_carlo_value, monte_carlo_values, DecisionRule, SimulatedData, Truth, ValueDraw};
pub use metrics::{compute_metrics, decision_agreement, ReplicateMetrics};
pub use scenario::{Covariance, Model, Signal, SimulationScenario, SparseCoefficients, SIGMA_NOISE_DEFAULT};
pub use study::{
    optimal_in_sample_value, replicate_scenario, resolve_threads, run_replicate, run_study, summarize, with_threads,
    CoverageRecord, MetricsSummary, ReplicateRecord, StudyOptions, StudyReport, THREADS_ENV,
};
