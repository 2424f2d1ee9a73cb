//! Flat `key = value` configuration with dotted keys and optional
//! `[section]` headers that prefix the keys below them.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::PenaltyFamily;
use crate::regime::{LambdaChoice, PhiMode, PropensityKind, RegimeOptions, StagePenalty};
use crate::simulate::{Covariance, Model, Signal, SimulationScenario, SparseCoefficients, StudyOptions};
use crate::solver::SolverOptions;

/// Parsed key/value pairs, keys fully qualified (`section.key`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse("unterminated section header", Some(line_no), None))?
                    .trim();
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("expected key = value, got '{line}'"), Some(line_no), None))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse("empty key", Some(line_no), None));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            let value = value.trim().trim_matches('"').to_string();
            if entries.insert(full.clone(), (value, line_no)).is_some() {
                return Err(Error::parse(format!("duplicate key '{full}'"), Some(line_no), Some(&full)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` when present.
    pub fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::parse(format!("invalid value '{v}' for '{key}': {e}"), Some(*line), Some(key))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|e| Error::parse(format!("invalid list item '{s}' for '{key}': {e}"), Some(*line), Some(key)))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Rejects keys outside `known` (exact names or `prefix.` families).
    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            let ok = known.iter().any(|k| match k.strip_suffix('*') {
                Some(prefix) => key.starts_with(prefix),
                None => key == k,
            });
            if !ok {
                return Err(Error::parse(format!("unknown key '{key}'"), Some(*line), Some(key)));
            }
        }
        Ok(())
    }
}

fn parse_lambda(v: &str) -> std::result::Result<LambdaChoice, String> {
    if v.eq_ignore_ascii_case("cv") {
        return Ok(LambdaChoice::Cv);
    }
    let l: f64 = v.parse().map_err(|_| format!("expected 'cv' or a number, got '{v}'"))?;
    if l.is_finite() && l >= 0.0 {
        Ok(LambdaChoice::Fixed(l))
    } else {
        Err(format!("λ must be finite and >= 0, got {v}"))
    }
}

struct LambdaArg(LambdaChoice);

impl FromStr for LambdaArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_lambda(s).map(LambdaArg)
    }
}

/// Parses a propensity mode name.
pub fn parse_propensity_kind(v: &str) -> Result<PropensityKind> {
    match v.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "logistic" => Ok(PropensityKind::Logistic),
        "sample_proportion" | "proportion" => Ok(PropensityKind::SampleProportion),
        "known" => Ok(PropensityKind::Known),
        other => Err(Error::domain(format!("unknown propensity mode '{other}'"))),
    }
}

/// Parses a working-model name.
pub fn parse_phi_mode(v: &str) -> Result<PhiMode> {
    match v.trim().to_ascii_lowercase().as_str() {
        "linear" => Ok(PhiMode::Linear),
        "zero" => Ok(PhiMode::Zero),
        other => Err(Error::domain(format!("unknown working model '{other}'"))),
    }
}

/// Estimation settings shared by `fit` and `replicate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub regime: RegimeOptions,
    pub propensity_mode: PropensityKind,
    pub phi_mode: PhiMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { regime: RegimeOptions::default(), propensity_mode: PropensityKind::Logistic, phi_mode: PhiMode::Linear }
    }
}

const RUN_KEYS: &[&str] = &[
    "penalty",
    "shape",
    "lambda",
    "cv_folds",
    "seed",
    "propensity_mode",
    "phi_mode",
    "propensity.*",
    "outcome.*",
    "contrast.*",
    "stage1.*",
    "stage2.*",
    "solver.*",
    "grid.*",
];

fn apply_stage(map: &ConfigMap, prefix: &str, stage: &mut StagePenalty) -> Result<()> {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    if let Some(family) = map.typed::<PenaltyFamily>(&key("penalty"))? {
        stage.family = family;
        stage.shape = family.default_shape();
    }
    if let Some(shape) = map.typed::<f64>(&key("shape"))? {
        stage.shape = shape;
    }
    if let Some(LambdaArg(l)) = map.typed::<LambdaArg>(&key("lambda"))? {
        stage.lambda = l;
    }
    Ok(())
}

impl RunConfig {
    /// Applies recognised keys of `map` on top of `self`. Stage keys resolve
    /// from general to specific: top level, then `stage1`/`stage2`, then
    /// `propensity`/`outcome`/`contrast`.
    pub fn apply(&mut self, map: &ConfigMap) -> Result<()> {
        let r = &mut self.regime;
        for stage in [&mut r.propensity_penalty, &mut r.outcome_penalty, &mut r.contrast_penalty] {
            apply_stage(map, "", stage)?;
        }
        apply_stage(map, "stage1", &mut r.propensity_penalty)?;
        apply_stage(map, "stage1", &mut r.outcome_penalty)?;
        apply_stage(map, "stage2", &mut r.contrast_penalty)?;
        apply_stage(map, "propensity", &mut r.propensity_penalty)?;
        apply_stage(map, "outcome", &mut r.outcome_penalty)?;
        apply_stage(map, "contrast", &mut r.contrast_penalty)?;
        if let Some(k) = map.typed("cv_folds")? {
            r.cv_folds = k;
        }
        if let Some(s) = map.typed("seed")? {
            r.seed = s;
        }
        apply_solver(map, &mut r.solver)?;
        if let Some(v) = map.get("propensity_mode") {
            self.propensity_mode = parse_propensity_kind(v)?;
        }
        if let Some(v) = map.get("phi_mode") {
            self.phi_mode = parse_phi_mode(v)?;
        }
        self.validate()
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        map.reject_unknown(RUN_KEYS)?;
        let mut cfg = Self::default();
        cfg.apply(map)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.regime;
        let any_cv = [&r.propensity_penalty, &r.outcome_penalty, &r.contrast_penalty]
            .iter()
            .any(|s| s.lambda == LambdaChoice::Cv);
        if any_cv && r.cv_folds < 2 {
            return Err(Error::domain("cv_folds must be >= 2 when any λ is cross-validated"));
        }
        Ok(())
    }
}

fn apply_solver(map: &ConfigMap, s: &mut SolverOptions) -> Result<()> {
    if let Some(v) = map.typed("solver.tolerance")? {
        s.tolerance = v;
    }
    if let Some(v) = map.typed("solver.max_sweeps")? {
        s.max_sweeps = v;
    }
    if let Some(v) = map.typed("solver.lla_steps")? {
        s.lla_steps = v;
    }
    if let Some(v) = map.typed("solver.max_support")? {
        s.max_support = v;
    }
    if let Some(v) = map.typed("grid.size")? {
        s.lambda_grid_size = v;
    }
    if let Some(v) = map.typed("grid.min_ratio")? {
        s.lambda_min_ratio = v;
    }
    Ok(())
}

const SCENARIO_KEYS: &[&str] = &[
    "model",
    "n",
    "p",
    "covariance",
    "rho",
    "signal",
    "sigma_noise",
    "standardize",
    "alpha0.*",
    "beta0.*",
    "gamma1.*",
    "gamma2.*",
    "study.*",
];

fn sparse_override(map: &ConfigMap, name: &str, target: &mut SparseCoefficients) -> Result<()> {
    let positions = map.list::<usize>(&format!("{name}.positions"))?;
    let values = map.list::<f64>(&format!("{name}.values"))?;
    if positions.is_none() && values.is_none() {
        return Ok(());
    }
    let positions = positions.unwrap_or_else(|| target.positions.clone());
    let values = values.unwrap_or_else(|| target.values.clone());
    *target = SparseCoefficients::new(positions, values)?;
    Ok(())
}

/// A scenario file: the scenario fields, optional `study.*` settings and any
/// estimation keys accepted by [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: SimulationScenario,
    pub study: StudyOptions,
}

impl ScenarioFile {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let known: Vec<&str> = SCENARIO_KEYS.iter().chain(RUN_KEYS).copied().collect();
        map.reject_unknown(&known)?;
        let model = map.typed::<Model>("model")?.unwrap_or(Model::I);
        let n = map.typed("n")?.unwrap_or(400);
        let p = map.typed("p")?.unwrap_or(1000);
        let covariance = match map.get("covariance").map(str::to_ascii_lowercase).as_deref() {
            None | Some("iid") => Covariance::Iid,
            Some("ar1") => Covariance::Ar1 { rho: map.typed("rho")?.unwrap_or(0.3) },
            Some(other) => return Err(Error::domain(format!("unknown covariance '{other}' (expected iid or ar1)"))),
        };
        let signal = match map.get("signal").map(str::to_ascii_lowercase).as_deref() {
            None | Some("large") => Signal::Large,
            Some("moderate") => Signal::Moderate,
            Some(other) => return Err(Error::domain(format!("unknown signal '{other}' (expected moderate or large)"))),
        };
        let seed = map.typed("seed")?.unwrap_or(0);
        let mut scenario = SimulationScenario::new(model, n, p, covariance, signal, seed);
        if let Some(s) = map.typed("sigma_noise")? {
            scenario.sigma_noise = s;
        }
        if let Some(s) = map.typed("standardize")? {
            scenario.standardize = s;
        }
        sparse_override(map, "alpha0", &mut scenario.alpha0)?;
        sparse_override(map, "beta0", &mut scenario.beta0)?;
        sparse_override(map, "gamma1", &mut scenario.gamma1)?;
        sparse_override(map, "gamma2", &mut scenario.gamma2)?;
        scenario.validate()?;

        let mut run = RunConfig::default();
        run.apply(map)?;
        let mut study = StudyOptions {
            regime: run.regime,
            propensity: run.propensity_mode,
            phi: run.phi_mode,
            ..StudyOptions::default()
        };
        if let Some(m) = map.typed("study.mc_subjects")? {
            study.mc_subjects = m;
        }
        if let Some(b) = map.typed("study.inference")? {
            study.inference = b;
        }
        Ok(Self { scenario, study })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_map(&ConfigMap::load(path)?)
    }
}
