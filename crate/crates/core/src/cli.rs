//! Command-line front end. [`dispatch`] parses arguments, runs one
//! subcommand and maps the outcome to a process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::inference::infer_value;
use crate::io::{
    load_dataset, read_json, study_label, write_dataset, write_json, write_summary_table, ConfigMap, DataLayout,
    Envelope, FitReport, RunConfig, ScenarioFile, TabularInput,
};
use crate::penalty::{condition1_audit, PenaltyFamily, PenaltySpec};
use crate::regime::{decide, fit_regime, Dataset, LambdaChoice, PropensityKind, PropensityMode};
use crate::simulate::{
    deviation_experiment, generate_dataset, run_study, Covariance, DeviationConfig, Model, NoiseKind, Signal,
    SimulationScenario,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "optregime", version, about = "Sparse A-learning for optimal treatment regimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the two-step regime estimator to a CSV dataset.
    Fit(FitArgs),
    /// Apply a fitted regime to covariate rows.
    Decide(DecideArgs),
    /// Estimate the value of a fitted regime with a confidence interval.
    Value(ValueArgs),
    /// Draw one simulated dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Run a replicated simulation study.
    Replicate(ReplicateArgs),
    /// Run the deviation-bound scaling experiment.
    Deviation(DeviationArgs),
    /// Check the folded-concave penalty conditions on a grid.
    AuditPenalty(AuditArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value = "a")]
    treatment: String,
    /// Comma-separated covariate columns (default: all others).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    no_standardize: bool,
}

impl DataArgs {
    fn input(&self) -> TabularInput {
        TabularInput {
            path: self.data.clone(),
            response_col: self.response.clone(),
            treatment_col: self.treatment.clone(),
            feature_cols: self.features.clone(),
            add_intercept: !self.no_intercept,
            standardize: !self.no_standardize,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Key-value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Penalty family for every stage: lasso, scad or mcp.
    #[arg(long)]
    penalty: Option<PenaltyFamily>,
    /// `cv` or a fixed λ for every stage.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, alias = "cv-folds")]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// logistic, proportion, known (with --known-propensity) or known:<file>.
    #[arg(long)]
    propensity: Option<String>,
    /// File of known propensities, one per row (implies --propensity known).
    #[arg(long)]
    known_propensity: Option<PathBuf>,
    /// Working model for E[Y|X]: linear or zero.
    #[arg(long)]
    phi: Option<String>,
    /// Exit with status 2 if any fit did not converge.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecideArgs {
    /// JSON written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// One raw covariate row, comma-separated, with or without the leading 1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "data", required_unless_present = "data")]
    x: Option<Vec<f64>>,
    /// CSV with the fit's covariate columns; one decision per row.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValueArgs {
    /// The dataset the regime was fitted on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    fit: PathBuf,
    /// Refit with these known propensities before inference.
    #[arg(long)]
    known_propensity: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file (key-value config).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// I, II or III.
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// iid or ar1.
    #[arg(long)]
    covariance: Option<String>,
    /// moderate or large.
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    sigma_noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioFile> {
        let map = match &self.scenario {
            Some(path) => ConfigMap::load(path)?,
            None => ConfigMap::default(),
        };
        let mut file = ScenarioFile::from_map(&map)?;
        let s = &mut file.scenario;
        let covariance = match self.covariance.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None => s.covariance,
            Some("iid") => Covariance::Iid,
            Some("ar1") => Covariance::DEFAULT_AR1,
            Some(other) => return Err(Error::domain(format!("unknown covariance '{other}'"))),
        };
        let signal = match self.signal.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None => s.signal,
            Some("moderate") => Signal::Moderate,
            Some("large") => Signal::Large,
            Some(other) => return Err(Error::domain(format!("unknown signal '{other}'"))),
        };
        if covariance != s.covariance || signal != s.signal {
            // Coefficient layout depends on both; rebuild from the defaults.
            let mut fresh = SimulationScenario::new(s.model, s.n, s.p, covariance, signal, s.seed);
            fresh.sigma_noise = s.sigma_noise;
            fresh.standardize = s.standardize;
            *s = fresh;
        }
        if let Some(m) = self.model {
            s.model = m;
        }
        if let Some(n) = self.n {
            s.n = n;
        }
        if let Some(p) = self.p {
            s.p = p;
        }
        if let Some(v) = self.sigma_noise {
            s.sigma_noise = v;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s.validate()?;
        Ok(file)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// logistic or proportion.
    #[arg(long)]
    propensity: Option<String>,
    #[arg(long)]
    mc_subjects: Option<usize>,
    /// Also record value-estimate CI coverage.
    #[arg(long)]
    inference: bool,
    /// Worker threads (overrides OPTREGIME_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Table-shaped CSV summary destination.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DeviationArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// One or more J values, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    j: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4")]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lattice points per axis (at least 3).
    #[arg(long, default_value_t = 5)]
    lattice: usize,
    #[arg(long, default_value_t = 32)]
    probes: usize,
    /// gaussian, rademacher or zero.
    #[arg(long, default_value = "gaussian")]
    noise: NoiseKind,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long, default_value = "scad")]
    penalty: PenaltyFamily,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Shape parameter (family default when absent).
    #[arg(long)]
    shape: Option<f64>,
    /// Grid upper end; the grid runs from 0 in steps of --step.
    #[arg(long, default_value_t = 5.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code: 0 on success, 1 on invalid input, 2 on numerical failure.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) | Error::Singular(_) => EXIT_NUMERICAL,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Decide(args) => cmd_decide(args),
        Command::Value(args) => cmd_value(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Replicate(args) => cmd_replicate(args),
        Command::Deviation(args) => cmd_deviation(args),
        Command::AuditPenalty(args) => cmd_audit(args),
    }
}

fn strict_status(strict: bool, ok: bool, what: &str) -> Result<i32> {
    if strict && !ok {
        Err(Error::Numerical(format!("{what} did not converge")))
    } else {
        Ok(EXIT_OK)
    }
}

/// Reads one probability per line; a non-numeric first line is a header.
fn read_propensities(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if k == 0 => continue,
            Err(_) => return Err(Error::parse(format!("'{cell}' is not a probability"), Some(k + 1), None)),
        }
    }
    Ok(out)
}

fn propensity_mode(kind: PropensityKind, known: Option<&Path>) -> Result<PropensityMode> {
    match (kind, known) {
        (_, Some(path)) => Ok(PropensityMode::Known(read_propensities(path)?)),
        (PropensityKind::Known, None) => Err(Error::domain("known propensities require --known-propensity")),
        (PropensityKind::Logistic, None) => Ok(PropensityMode::Logistic),
        (PropensityKind::SampleProportion, None) => Ok(PropensityMode::SampleProportion),
    }
}

fn cmd_fit(args: FitArgs) -> Result<i32> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_map(&ConfigMap::load(path)?)?,
        None => RunConfig::default(),
    };
    let r = &mut config.regime;
    if let Some(family) = args.penalty {
        for stage in [&mut r.propensity_penalty, &mut r.outcome_penalty, &mut r.contrast_penalty] {
            stage.family = family;
            stage.shape = family.default_shape();
        }
    }
    if let Some(l) = &args.lambda {
        let choice = if l.eq_ignore_ascii_case("cv") {
            LambdaChoice::Cv
        } else {
            let v: f64 = l.parse().map_err(|_| Error::domain(format!("--lambda expects 'cv' or a number, got '{l}'")))?;
            LambdaChoice::Fixed(v)
        };
        for stage in [&mut r.propensity_penalty, &mut r.outcome_penalty, &mut r.contrast_penalty] {
            stage.lambda = choice;
        }
    }
    if let Some(k) = args.folds {
        r.cv_folds = k;
    }
    if let Some(s) = args.seed {
        r.seed = s;
    }
    let mut known_file = args.known_propensity.clone();
    if let Some(p) = &args.propensity {
        match p.split_once(':') {
            Some((kind, file)) if kind.eq_ignore_ascii_case("known") => {
                if known_file.is_some() {
                    return Err(Error::domain("give the known propensities once, via known:<file> or --known-propensity"));
                }
                known_file = Some(PathBuf::from(file));
            }
            _ => config.propensity_mode = crate::io::parse_propensity_kind(p)?,
        }
    }
    if known_file.is_some() {
        config.propensity_mode = PropensityKind::Known;
    }
    if let Some(p) = &args.phi {
        config.phi_mode = crate::io::parse_phi_mode(p)?;
    }
    config.validate()?;

    let input = args.data.input();
    let data = load_dataset(&input)?;
    let mode = propensity_mode(config.propensity_mode, known_file.as_deref())?;
    let estimate = fit_regime(&data, &config.regime, &mode, config.phi_mode)?;
    let names = data.feature_names().to_vec();
    let start = usize::from(input.add_intercept);
    let layout = DataLayout {
        response_col: input.response_col.clone(),
        treatment_col: input.treatment_col.clone(),
        feature_cols: names[start..].to_vec(),
        add_intercept: input.add_intercept,
        standardize: input.standardize,
    };
    let converged = estimate.converged;
    let report = FitReport::new(estimate, names, layout, config);
    write_json(&Envelope::new("fit", report), args.out.as_deref())?;
    strict_status(args.strict, converged, "the regime fit")
}

fn load_fit(path: &Path) -> Result<FitReport> {
    let env: Envelope<FitReport> = read_json(path)?;
    Ok(env.body)
}

fn layout_input(layout: &DataLayout, path: &Path) -> TabularInput {
    TabularInput {
        path: path.to_path_buf(),
        response_col: layout.response_col.clone(),
        treatment_col: layout.treatment_col.clone(),
        feature_cols: Some(layout.feature_cols.clone()),
        add_intercept: layout.add_intercept,
        standardize: layout.standardize,
    }
}

#[derive(serde::Serialize)]
struct Decisions {
    #[serde(skip_serializing_if = "Option::is_none")]
    decision: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decisions: Option<Vec<u8>>,
}

fn cmd_decide(args: DecideArgs) -> Result<i32> {
    let fit = load_fit(&args.fit)?;
    let beta = &fit.coefficients.beta;
    let body = if let Some(mut x) = args.x {
        if fit.layout.add_intercept && x.len() + 1 == beta.len() {
            x.insert(0, 1.0);
        }
        Decisions { decision: Some(decide(beta, &x)?), decisions: None }
    } else {
        let path = args.data.expect("clap requires --x or --data");
        let mut rdr = csv::Reader::from_path(&path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let idx: Vec<usize> = fit
            .layout
            .feature_cols
            .iter()
            .map(|f| {
                headers
                    .iter()
                    .position(|h| h == f)
                    .ok_or_else(|| Error::parse(format!("missing column '{f}'"), None, Some(f)))
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(beta.len());
            if fit.layout.add_intercept {
                row.push(1.0);
            }
            for &k in &idx {
                let cell = record.get(k).unwrap_or("").trim();
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::parse(format!("'{cell}' is not a number"), Some(r + 1), Some(&headers[k])))?;
                row.push(v);
            }
            out.push(decide(beta, &row)?);
        }
        Decisions { decision: None, decisions: Some(out) }
    };
    write_json(&Envelope::new("decide", body), args.out.as_deref())?;
    Ok(EXIT_OK)
}

fn cmd_value(args: ValueArgs) -> Result<i32> {
    let fit = load_fit(&args.fit)?;
    let data: Dataset = load_dataset(&layout_input(&fit.layout, &args.data))?;
    let (estimate, converged) = match &args.known_propensity {
        Some(path) => {
            let mode = PropensityMode::Known(read_propensities(path)?);
            let refit = fit_regime(&data, &fit.config.regime, &mode, fit.config.phi_mode)?;
            let ok = refit.converged;
            (refit, ok)
        }
        None => {
            if fit.estimate.pi_hat.len() != data.n() {
                return Err(Error::domain(format!(
                    "fit was computed on {} rows but the data has {}",
                    fit.estimate.pi_hat.len(),
                    data.n()
                )));
            }
            let ok = fit.estimate.converged;
            (fit.estimate, ok)
        }
    };
    let value = infer_value(&data, &estimate)?;
    write_json(&Envelope::new("value", value), args.out.as_deref())?;
    strict_status(args.strict, converged, "the regime fit")
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32> {
    let file = args.scenario.resolve()?;
    let sim = generate_dataset(&file.scenario)?;
    let raw = Dataset::new(sim.dataset.y().to_vec(), sim.dataset.a().to_vec(), sim.raw_design)?
        .with_feature_names(sim.dataset.feature_names().to_vec())?;
    match &args.out {
        Some(path) => write_dataset(std::fs::File::create(path)?, &raw, "y", "a")?,
        None => write_dataset(std::io::stdout().lock(), &raw, "y", "a")?,
    }
    Ok(EXIT_OK)
}

fn cmd_replicate(args: ReplicateArgs) -> Result<i32> {
    let file = args.scenario.resolve()?;
    let mut opts = file.study;
    if let Some(p) = &args.propensity {
        opts.propensity = crate::io::parse_propensity_kind(p)?;
        if opts.propensity == PropensityKind::Known {
            return Err(Error::domain("replicate supports logistic or proportion propensities"));
        }
    }
    if let Some(m) = args.mc_subjects {
        opts.mc_subjects = m;
    }
    opts.inference |= args.inference;
    opts.threads = args.threads;
    let report = run_study(&file.scenario, args.reps, &opts)?;
    if let Some(path) = &args.table {
        write_summary_table(std::fs::File::create(path)?, &study_label(&report), report.scenario.n, &report.summary)?;
    }
    let ok = report.summary.failures == 0 && report.summary.nonconverged == 0;
    write_json(&Envelope::new("replicate", &report), args.out.as_deref())?;
    strict_status(args.strict, ok, "every replicate")
}

fn cmd_deviation(args: DeviationArgs) -> Result<i32> {
    let cfg = DeviationConfig {
        n: args.n,
        j_grid: args.j,
        s: args.s,
        delta_grid: args.deltas,
        replicates: args.reps,
        seed: args.seed,
        lattice_points: args.lattice,
        interior_probes: args.probes,
        noise: args.noise,
        threads: args.threads,
    };
    let report = deviation_experiment(&cfg)?;
    write_json(&Envelope::new("deviation", report), args.out.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(serde::Serialize)]
struct AuditOutput {
    penalty: PenaltySpec,
    grid_points: usize,
    all_pass: bool,
    report: crate::penalty::AuditReport,
}

fn cmd_audit(args: AuditArgs) -> Result<i32> {
    if !(args.step > 0.0 && args.t_max >= 0.0) {
        return Err(Error::domain("audit grid needs --step > 0 and --t-max >= 0"));
    }
    let spec = PenaltySpec::new(args.penalty, args.lambda, args.shape.unwrap_or(args.penalty.default_shape()))?;
    let steps = (args.t_max / args.step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * args.step).collect();
    let report = condition1_audit(&spec, &grid)?;
    let body = AuditOutput { penalty: spec, grid_points: grid.len(), all_pass: report.all_pass(), report };
    write_json(&Envelope::new("audit-penalty", body), args.out.as_deref())?;
    Ok(EXIT_OK)
}
