//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line
//! before asserting, so a plain `cargo test --test acceptance` gives a
//! readable scorecard. The replication studies take tens of minutes on a
//! single core.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use optregime::inference::{covariance_blocks, value_variance};
use optregime::regime::{PhiMode, PropensityKind, RegimeEstimate, StageFit};
use optregime::simulate::{
    deviation_experiment, run_study, summarize, Covariance, DeviationConfig, Model, Signal, SimulationScenario,
    StudyOptions, StudyReport,
};
use optregime::solver::{FitResult, LossKind, SolverOptions};
use optregime::{DesignMatrix, PenaltyFamily, PenaltySpec, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Written to the raw stderr handle so the line shows even when the test
/// harness captures output.
fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("criterion {id}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn model_i(signal: Signal, seed: u64) -> SimulationScenario {
    SimulationScenario::new(Model::I, 400, 1000, Covariance::Iid, signal, seed)
}

/// Large-signal Model I study shared by the value criteria: its first 100
/// replicates are the 100-replicate study (replicate r depends only on the
/// master seed and r), all 200 feed the coverage check.
fn large_study() -> &'static StudyReport {
    static STUDY: OnceLock<StudyReport> = OnceLock::new();
    STUDY.get_or_init(|| {
        let opts = StudyOptions { inference: true, ..StudyOptions::default() };
        run_study(&model_i(Signal::Large, 101), 200, &opts).expect("large-signal study")
    })
}

#[test]
fn criterion_1_large_signal_table_row() {
    let report = large_study();
    let s = summarize(&report.replicates[..100]);
    let pass = s.failures == 0
        && within(s.pcd, 0.950, 0.04)
        && s.fn_beta <= 0.1
        && within(s.value_hat_mean, 2.283, 0.05);
    verdict(
        "1",
        pass,
        format!(
            "R={} failures={} PCD={:.4} (0.950±0.04) FN={:.3} (≤0.1) value={:.4} (2.283±0.05) optimal={:.4} L2={:.4} #S={:.2}",
            s.replications, s.failures, s.pcd, s.fn_beta, s.value_hat_mean, s.value_opt_mean, s.l2_loss_beta,
            s.num_selected_beta
        ),
    );
}

#[test]
fn criterion_2_moderate_signal_table_row() {
    let report = run_study(&model_i(Signal::Moderate, 202), 100, &StudyOptions::default()).unwrap();
    let s = &report.summary;
    let pass = s.failures == 0 && within(s.l2_loss_beta, 0.504, 0.3 * 0.504) && within(s.pcd, 0.918, 0.05);
    verdict(
        "2",
        pass,
        format!(
            "R={} failures={} L2={:.4} (0.504±30%) PCD={:.4} (0.918±0.05) FN={:.3} #S={:.2} value={:.4} optimal={:.4}",
            s.replications, s.failures, s.l2_loss_beta, s.pcd, s.fn_beta, s.num_selected_beta, s.value_hat_mean,
            s.value_opt_mean
        ),
    );
}

#[test]
fn criterion_3_sample_proportion_sensitivity() {
    let opts = StudyOptions { propensity: PropensityKind::SampleProportion, ..StudyOptions::default() };
    let report = run_study(&model_i(Signal::Moderate, 303), 100, &opts).unwrap();
    let s = &report.summary;
    let pass = s.failures == 0 && within(s.pcd, 0.967, 0.05);
    verdict(
        "3",
        pass,
        format!(
            "R={} failures={} PCD={:.4} (0.967±0.05) L2={:.4} FN={:.3} #S={:.2}",
            s.replications, s.failures, s.pcd, s.l2_loss_beta, s.fn_beta, s.num_selected_beta
        ),
    );
}

struct Instance {
    x: DesignMatrix,
    y: Vec<f64>,
    a: Vec<f64>,
}

/// Intercept plus 0 to 2 standardized covariates, a Gaussian response and a
/// binary response drawn from a mild logistic model.
fn small_instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let n = rng.random_range(20..=30);
        let k = rng.random_range(0..=2);
        let mut rows = Vec::with_capacity(n * k);
        for _ in 0..n * k {
            rows.push(rng.sample::<f64, _>(StandardNormal));
        }
        let x = DesignMatrix::with_intercept(n, k, &rows).unwrap().standardize();
        let truth: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta = x.mul_vec(&truth).unwrap();
        let y = eta.iter().map(|e| e + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let a: Vec<f64> = eta
            .iter()
            .map(|e| f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-0.5 * e).exp()))))
            .collect();
        // Both classes present and no separation, so the MLE exists.
        if newton_logistic(&x, &a).is_some() {
            return Instance { x, y, a };
        }
    }
}

fn dense(x: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x.get(i, j))
}

fn ols(x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
    let xm = dense(x);
    let xty = xm.transpose() * DVector::from_column_slice(y);
    let chol = (xm.transpose() * &xm).cholesky().expect("full-rank design");
    chol.solve(&xty).iter().copied().collect()
}

/// Newton–Raphson MLE of the logistic model; `None` when it diverges.
fn newton_logistic(x: &DesignMatrix, a: &[f64]) -> Option<Vec<f64>> {
    let xm = dense(x);
    let (n, p) = xm.shape();
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = &xm * &beta;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let pi = 1.0 / (1.0 + (-eta[i]).exp());
            let row = xm.row(i).transpose();
            grad += &row * (a[i] - pi);
            hess += &row * row.transpose() * (pi * (1.0 - pi));
        }
        let step = hess.cholesky()?.solve(&grad);
        beta += &step;
        if beta.amax() > 30.0 {
            return None;
        }
        if step.amax() < 1e-13 {
            return Some(beta.iter().copied().collect());
        }
    }
    None
}

/// Minimum of `f` over the box lattice with spacing `step`.
fn grid_min(lo: &[f64], hi: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let counts: Vec<usize> = lo.iter().zip(hi).map(|(l, h)| ((h - l) / step).ceil() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut point = vec![0.0; lo.len()];
    let mut best = f64::INFINITY;
    for flat in 0..total {
        let mut rest = flat;
        for (d, &c) in counts.iter().enumerate() {
            point[d] = lo[d] + (rest % c) as f64 * step;
            rest /= c;
        }
        best = best.min(f(&point));
    }
    best
}

/// Penalized objective evaluated from its definition, intercept unpenalized.
fn direct_objective(problem: &Problem, spec: &PenaltySpec, coef: &[f64]) -> f64 {
    let x = problem.design();
    let r = problem.response();
    let n = x.nrows();
    let mut loss = 0.0;
    for i in 0..n {
        let eta: f64 = coef.iter().enumerate().map(|(j, c)| c * x.get(i, j)).sum();
        loss += match problem.loss_kind() {
            LossKind::SquaredError => (r[i] - eta).powi(2),
            LossKind::Logistic => {
                let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
                softplus - r[i] * eta
            }
        };
    }
    let penalty: f64 = coef[1..].iter().map(|c| spec.value(c.abs()).unwrap()).sum();
    loss / n as f64 + penalty
}

#[test]
fn criterion_4_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let opts = SolverOptions::default();
    let families = [PenaltyFamily::Lasso, PenaltyFamily::Scad, PenaltyFamily::Mcp];
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_oracle: f64 = 0.0;
    for inst in 0..20 {
        let data = small_instance(&mut rng);
        let family = families[inst % 3];
        let problems = [
            (Problem::least_squares(data.x.clone(), data.y.clone()).unwrap(), ols(&data.x, &data.y)),
            (
                Problem::logistic(data.x.clone(), data.a.clone()).unwrap(),
                newton_logistic(&data.x, &data.a).unwrap(),
            ),
        ];
        for (problem, oracle) in &problems {
            let zero = PenaltySpec::new(family, 0.0, family.default_shape()).unwrap();
            let unpenalized = problem.fit(&zero, &opts, None).unwrap();
            let dev = unpenalized
                .coefficients
                .iter()
                .zip(oracle)
                .map(|(c, o)| (c - o).abs())
                .fold(0.0, f64::max);
            worst_oracle = worst_oracle.max(dev);

            let lambda = rng.random_range(0.1..0.6) * problem.lambda_max().max(0.05);
            let spec = PenaltySpec::new(family, lambda, family.default_shape()).unwrap();
            let fit = problem.fit(&spec, &opts, None).unwrap();
            let lo: Vec<f64> = oracle.iter().map(|c| c.min(0.0) - 0.5).collect();
            let hi: Vec<f64> = oracle.iter().map(|c| c.max(0.0) + 0.5).collect();
            let brute = grid_min(&lo, &hi, 1e-2, |c| direct_objective(problem, &spec, c));
            worst_gap = worst_gap.max(fit.objective - brute);
        }
    }
    let pass = worst_gap <= 1e-3 && worst_oracle <= 1e-6;
    verdict(
        "4",
        pass,
        format!("20 instances x 2 losses: max(solver - grid) = {worst_gap:.3e} (≤1e-3), max |λ=0 fit - Newton/OLS| = {worst_oracle:.3e} (≤1e-6)"),
    );
}

#[test]
fn criterion_5_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 40;
        let k = rng.random_range(1..=5);
        let rows: Vec<f64> = (0..n * k).map(|_| rng.sample(StandardNormal)).collect();
        let x = DesignMatrix::with_intercept(n, k, &rows).unwrap().standardize();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let problems = [Problem::least_squares(x.clone(), y).unwrap(), Problem::logistic(x, a).unwrap()];
        for problem in &problems {
            for _ in 0..5 {
                let point: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.5..1.5)).collect();
                let grad = problem.gradient(&point).unwrap();
                let h = 1e-5;
                let mut err: f64 = 0.0;
                let mut norm: f64 = 0.0;
                for j in 0..=k {
                    let mut up = point.clone();
                    let mut down = point.clone();
                    up[j] += h;
                    down[j] -= h;
                    let fd = (problem.loss(&up).unwrap() - problem.loss(&down).unwrap()) / (2.0 * h);
                    err += (grad[j] - fd).powi(2);
                    norm += grad[j].powi(2);
                }
                worst = worst.max(err.sqrt() / norm.sqrt().max(1e-12));
            }
        }
    }
    verdict("5", worst <= 1e-5, format!("10 instances x 5 points x 2 losses: max relative error {worst:.3e} (≤1e-5)"));
}

fn regime_with(beta: Vec<f64>, pi_hat: Vec<f64>) -> RegimeEstimate {
    let p = beta.len();
    let spec = PenaltySpec::lasso(0.0).unwrap();
    RegimeEstimate {
        alpha_hat: None,
        theta_hat: None,
        beta_hat: StageFit {
            fit: FitResult {
                support: (0..p).filter(|&j| beta[j] != 0.0).collect(),
                coefficients: beta,
                lambda: 0.0,
                penalty: spec,
                objective: 0.0,
                iterations: 0,
                converged: true,
                trace: Vec::new(),
            },
            cv: None,
        },
        propensity_mode: PropensityKind::Known,
        phi_mode: PhiMode::Zero,
        pi_hat,
        phi_hat: Vec::new(),
        scales: vec![1.0; p],
        converged: true,
    }
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DesignMatrix {
    let rows: Vec<f64> = (0..n * k).map(|_| rng.sample(StandardNormal)).collect();
    DesignMatrix::with_intercept(n, k, &rows).unwrap()
}

#[test]
fn criterion_6_value_inference_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);

    // (a) π̂ᵢ equal to the estimated decision makes vₙ vanish.
    let mut exact = true;
    for _ in 0..5 {
        let n = 60;
        let x = random_design(&mut rng, n, 4);
        let beta: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pi: Vec<f64> = x.mul_vec(&beta).unwrap().iter().map(|s| f64::from(u8::from(*s > 0.0))).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let data = optregime::Dataset::new(y, a, x.clone()).unwrap();
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.25)).collect();
        let blocks = covariance_blocks(&x, &w, &delta, &[0, 1], &[0, 2, 3]).unwrap();
        let sigma2 = rng.random_range(0.5..2.0);
        let est = value_variance(&data, &regime_with(beta, pi), &blocks, sigma2).unwrap();
        exact &= est.variance == sigma2;
    }

    // (b) Σ₂₂′ − Σ₂₂ is PSD.
    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(30..80);
        let k = rng.random_range(3..8);
        let x = random_design(&mut rng, n, k);
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.25)).collect();
        let pick = |rng: &mut ChaCha8Rng| -> Vec<usize> { (0..=k).filter(|_| rng.random::<f64>() < 0.6).collect() };
        let sa = pick(&mut rng);
        let mut sb = pick(&mut rng);
        if sb.is_empty() {
            sb.push(0);
        }
        let blocks = covariance_blocks(&x, &w, &delta, &sa, &sb).unwrap();
        let diff = &blocks.sigma22_known - &blocks.sigma22;
        let diff = (&diff + diff.transpose()) * 0.5;
        let lo = SymmetricEigen::new(diff).eigenvalues.min();
        min_eig = min_eig.min(lo);
    }

    // (c) CI coverage of Vₙ(β₀).
    let report = large_study();
    let coverage = report.summary.ci_coverage.unwrap_or(f64::NAN);
    let pass = exact && min_eig >= -1e-8 && (0.90..=0.99).contains(&coverage) && report.summary.failures == 0;
    verdict(
        "6",
        pass,
        format!(
            "(a) vₙ=0 variance == σ̂²: {exact}; (b) min eig(Σ₂₂′−Σ₂₂) = {min_eig:.3e} (≥−1e-8); (c) coverage = {coverage:.3} over R={} (in [0.90, 0.99])",
            report.summary.replications
        ),
    );
}

#[test]
fn criterion_7_deviation_scaling() {
    let cfg = DeviationConfig { seed: 707, ..DeviationConfig::default() };
    assert_eq!((cfg.n, cfg.s, cfg.replicates), (500, 3, 200));
    assert_eq!(cfg.j_grid, vec![200]);
    assert_eq!(cfg.delta_grid, vec![0.05, 0.1, 0.2, 0.4]);
    let report = deviation_experiment(&cfg).unwrap();
    let slope = report.slope_delta.iter().find(|(j, _)| *j == 200).map(|(_, s)| *s).unwrap_or(f64::NAN);
    let ratio = report.constant_ratio.unwrap_or(f64::NAN);
    verdict(
        "7",
        within(slope, 1.0, 0.2) && ratio <= 3.0,
        format!("log-log slope vs δ = {slope:.4} (1.0±0.2), bound constant max/min = {ratio:.4} (≤3)"),
    );
}

#[test]
fn criterion_8_replicate_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.cfg");
    std::fs::write(
        &scenario,
        "model = I\nn = 120\np = 100\ncovariance = iid\nsignal = large\n\n[study]\nmc_subjects = 2000\n",
    )
    .unwrap();
    let run = |threads: &str, tag: &str| -> Vec<u8> {
        let out = dir.path().join(format!("{tag}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_optregime"))
            .args(["replicate", "--reps", "6", "--seed", "7", "--inference", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .env("OPTREGIME_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success(), "replicate exited with {status}");
        std::fs::read(out).unwrap()
    };
    let first = run("1", "a");
    let again = run("1", "b");
    let wide = run("8", "c");
    let pass = !first.is_empty() && first == again && first == wide;
    verdict(
        "8",
        pass,
        format!("{} bytes; rerun identical: {}; 1 vs 8 threads identical: {}", first.len(), first == again, first == wide),
    );
}
