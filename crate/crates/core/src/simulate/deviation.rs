//! Monte-Carlo check of the deviation bound
//! E sup_{h₁,h₂∈H} ‖{A(h₁) − A(h₂)}ᵀz‖_∞ ≤ c·δ·√(S log J)·dₙ·ω·log n
//! for the linear family aᵢⱼ(h) = xᵢⱼ · x_{i,1:S}ᵀh on the cube
//! H = {h : ‖h‖_∞ ≤ δ}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// ±1 with equal probability (bounded noise, no ω log n factor).
    Rademacher,
    /// z ≡ 0.
    Zero,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseKind::Gaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            "zero" => Ok(NoiseKind::Zero),
            other => Err(Error::domain(format!("unknown noise kind '{other}'"))),
        }
    }
}

impl NoiseKind {
    /// ψ₁ Orlicz norm inf{C : E exp(|z|/C) ≤ 2}.
    pub fn psi1_norm(self) -> f64 {
        match self {
            NoiseKind::Zero => 0.0,
            NoiseKind::Rademacher => 1.0 / std::f64::consts::LN_2,
            NoiseKind::Gaussian => {
                // E exp(|Z|/C) is decreasing in C; bisect on it.
                let moment = |c: f64| {
                    let steps = 4000;
                    let upper = 40.0;
                    let h = upper / steps as f64;
                    let f = |z: f64| 2.0 * (z / c - 0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    let mut acc = f(0.0) + f(upper);
                    for k in 1..steps {
                        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
                    }
                    acc * h / 3.0
                };
                let (mut lo, mut hi) = (0.5, 5.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if moment(mid) > 2.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// ω · log n, or 1 for bounded noise.
    fn tail_factor(self, n: usize) -> f64 {
        match self {
            NoiseKind::Gaussian => self.psi1_norm() * (n as f64).ln(),
            NoiseKind::Rademacher | NoiseKind::Zero => 1.0,
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseKind::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviationConfig {
    pub n: usize,
    /// Values of J (number of functions) to sweep.
    pub j_grid: Vec<usize>,
    /// Dimension S of h.
    pub s: usize,
    pub delta_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub lattice_points: usize,
    pub interior_probes: usize,
    pub noise: NoiseKind,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self {
            n: 500,
            j_grid: vec![200],
            s: 3,
            delta_grid: vec![0.05, 0.1, 0.2, 0.4],
            replicates: 200,
            seed: 0,
            lattice_points: 5,
            interior_probes: 32,
            noise: NoiseKind::Gaussian,
            threads: None,
        }
    }
}

/// Results for one (δ, J) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCell {
    pub delta: f64,
    pub j: usize,
    pub mean_sup: f64,
    pub se_sup: f64,
    pub mean_d_n: f64,
    /// Mean of sup / (δ √(S log J) dₙ ω log n); `None` when δ = 0.
    pub bound_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub config: DeviationConfig,
    pub omega: f64,
    pub cells: Vec<DeviationCell>,
    /// Log-log slope of mean sup against δ, one entry per J.
    pub slope_delta: Vec<(usize, f64)>,
    /// Log-log slope of mean sup/(δ dₙ) against √log J when several J are swept.
    pub slope_sqrt_log_j: Option<f64>,
    /// max / min of the fitted bound constant over all cells with δ > 0.
    pub constant_ratio: Option<f64>,
}

/// One draw of (sup deviation, dₙ).
fn one_draw(cfg: &DeviationConfig, delta: f64, j_count: usize, seed: u64) -> (f64, f64) {
    let (n, s) = (cfg.n, cfg.s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column-major n × J covariates; the first S columns drive h.
    let x: Vec<f64> = (0..n * j_count).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<f64> = (0..n).map(|_| cfg.noise.draw(&mut rng)).collect();
    let col = |j: usize| &x[j * n..(j + 1) * n];

    // bₛⱼ = xⱼ ∘ xₛ does not depend on h; gⱼₛ = Σᵢ zᵢ xᵢⱼ xᵢₛ.
    let mut g = vec![0.0; j_count * s];
    let mut d_n: f64 = 0.0;
    for j in 0..j_count {
        let xj = col(j);
        let mut norm_sum = 0.0;
        for t in 0..s {
            let xs = col(t);
            let (mut gz, mut sq) = (0.0, 0.0);
            for i in 0..n {
                let b = xj[i] * xs[i];
                gz += z[i] * b;
                sq += b * b;
            }
            g[j * s + t] = gz;
            norm_sum += sq.sqrt();
        }
        d_n = d_n.max(norm_sum);
    }

    // Lattice over the cube plus uniform interior probes.
    let l = cfg.lattice_points;
    let axis: Vec<f64> = (0..l).map(|k| -delta + 2.0 * delta * k as f64 / (l - 1) as f64).collect();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(l.pow(s as u32) + cfg.interior_probes);
    let mut idx = vec![0usize; s];
    loop {
        points.push(idx.iter().map(|&k| axis[k]).collect());
        let mut t = 0;
        while t < s {
            idx[t] += 1;
            if idx[t] < l {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
        if t == s {
            break;
        }
    }
    for _ in 0..cfg.interior_probes {
        points.push((0..s).map(|_| rng.random_range(-1.0..=1.0) * delta).collect());
    }

    let mut sup: f64 = 0.0;
    for j in 0..j_count {
        let gj = &g[j * s..(j + 1) * s];
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in &points {
            let v: f64 = gj.iter().zip(h).map(|(a, b)| a * b).sum();
            hi = hi.max(v);
            lo = lo.min(v);
        }
        sup = sup.max(hi - lo);
    }
    (sup, d_n)
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs every (δ, J) cell with its own independent draws.
pub fn deviation_experiment(cfg: &DeviationConfig) -> Result<DeviationReport> {
    if cfg.lattice_points < 3 {
        return Err(Error::domain(format!(
            "lattice needs at least 3 points per axis, got {}",
            cfg.lattice_points
        )));
    }
    if cfg.n < 2 || cfg.s == 0 || cfg.replicates == 0 {
        return Err(Error::domain("deviation experiment needs n >= 2, S >= 1 and at least one replicate"));
    }
    if cfg.j_grid.is_empty() || cfg.j_grid.iter().any(|&j| j < cfg.s.max(2)) {
        return Err(Error::domain("every J must be at least max(S, 2)"));
    }
    if cfg.delta_grid.is_empty() || cfg.delta_grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::domain("δ grid must be non-empty, finite and non-negative"));
    }

    let omega = cfg.noise.psi1_norm();
    let tail = cfg.noise.tail_factor(cfg.n);
    let cells_spec: Vec<(usize, f64, usize)> = cfg
        .j_grid
        .iter()
        .flat_map(|&j| cfg.delta_grid.iter().map(move |&d| (j, d)))
        .enumerate()
        .map(|(k, (j, d))| (k, d, j))
        .collect();

    let cells: Vec<DeviationCell> = super::study::with_threads(cfg.threads, || {
        cells_spec
            .par_iter()
            .map(|&(k, delta, j)| {
                let cell_seed = derive_seed(cfg.seed, k as u64);
                let draws: Vec<(f64, f64)> = (0..cfg.replicates)
                    .into_par_iter()
                    .map(|r| one_draw(cfg, delta, j, derive_seed(cell_seed, r as u64)))
                    .collect();
                let reps = draws.len() as f64;
                let mean_sup = draws.iter().map(|d| d.0).sum::<f64>() / reps;
                let var = draws.iter().map(|d| (d.0 - mean_sup).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
                let mean_d_n = draws.iter().map(|d| d.1).sum::<f64>() / reps;
                let scale = ((cfg.s as f64) * (j as f64).ln()).sqrt() * tail;
                let bound_constant = (delta > 0.0).then(|| {
                    draws.iter().map(|(sup, d_n)| sup / (delta * scale * d_n)).sum::<f64>() / reps
                });
                DeviationCell { delta, j, mean_sup, se_sup: (var / reps).sqrt(), mean_d_n, bound_constant }
            })
            .collect()
    })?;

    let positive = |c: &&DeviationCell| c.delta > 0.0 && c.mean_sup > 0.0;
    let mut slope_delta = Vec::new();
    for &j in &cfg.j_grid {
        let pts: Vec<&DeviationCell> = cells.iter().filter(|c| c.j == j).filter(positive).collect();
        let xs: Vec<f64> = pts.iter().map(|c| c.delta.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|c| c.mean_sup.ln()).collect();
        if let Some(s) = ols_slope(&xs, &ys) {
            slope_delta.push((j, s));
        }
    }

    let slope_sqrt_log_j = {
        let pts: Vec<&DeviationCell> = cells.iter().filter(positive).collect();
        let xs: Vec<f64> = pts.iter().map(|c| (c.j as f64).ln().sqrt().ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|c| (c.mean_sup / (c.delta * c.mean_d_n)).ln()).collect();
        let distinct_j = cfg.j_grid.iter().collect::<std::collections::BTreeSet<_>>().len();
        if distinct_j >= 2 { ols_slope(&xs, &ys) } else { None }
    };

    let constants: Vec<f64> = cells.iter().filter_map(|c| c.bound_constant).filter(|c| *c > 0.0).collect();
    let constant_ratio = (!constants.is_empty()).then(|| {
        let max = constants.iter().copied().fold(f64::MIN, f64::max);
        let min = constants.iter().copied().fold(f64::MAX, f64::min);
        max / min
    });

    Ok(DeviationReport { config: cfg.clone(), omega, cells, slope_delta, slope_sqrt_log_j, constant_ratio })
}
