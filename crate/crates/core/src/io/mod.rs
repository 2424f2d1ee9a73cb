//! Reading datasets and configuration, writing JSON reports and CSV tables.

mod config;
mod output;
mod tabular;

pub use config::{parse_phi_mode, parse_propensity_kind, ConfigMap, RunConfig, ScenarioFile};
pub use output::{
    read_json, study_label, write_json, write_summary_table, DataLayout, Envelope, FitReport, RawCoefficients,
    SCHEMA_VERSION,
};
pub use tabular::{load_dataset, read_dataset, write_dataset, TabularInput, INTERCEPT_NAME};
