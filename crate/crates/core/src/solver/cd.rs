//! Cyclic coordinate descent for weighted-L1 penalized losses.
//!
//! Both solvers alternate a full sweep over every coordinate with repeated
//! sweeps over the current nonzero set, and stop once a full sweep moves no
//! coefficient by more than the tolerance.

use super::{LossKind, Problem, SolverOptions, IRLS_WEIGHT_FLOOR, PROB_CLIP};
use crate::linalg::{axpy, dot, expit, wdot};

pub(crate) struct SolveOutcome {
    pub(crate) sweeps: usize,
    pub(crate) converged: bool,
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn weighted_l1(weights: &[f64], coef: &[f64]) -> f64 {
    coef.iter()
        .zip(weights)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, w)| w * c.abs())
        .sum()
}

/// Minimizes `loss(coef) + Σ weights[j]·|coef[j]|` in place, starting from
/// `coef`. An infinite weight pins a coordinate at zero.
pub(crate) fn solve_weighted(
    problem: &Problem,
    weights: &[f64],
    coef: &mut [f64],
    opts: &SolverOptions,
    trace: &mut Vec<Vec<f64>>,
) -> SolveOutcome {
    let mut local = Vec::new();
    let out = match problem.loss {
        LossKind::SquaredError => solve_ls(problem, weights, coef, opts, opts.trace.then_some(&mut local)),
        LossKind::Logistic => solve_logistic(problem, weights, coef, opts, opts.trace.then_some(&mut local)),
    };
    if opts.trace {
        trace.push(local);
    }
    out
}

/// One pass over `coords` for (1/n)‖r‖² + Σ w|b|; returns the largest change.
fn ls_pass(
    problem: &Problem,
    weights: &[f64],
    coef: &mut [f64],
    resid: &mut [f64],
    coords: impl Iterator<Item = usize>,
) -> f64 {
    let inv_n = 1.0 / problem.nrows() as f64;
    let mut max_delta: f64 = 0.0;
    for j in coords {
        let c = problem.col_sq[j];
        let old = coef[j];
        let new = if c > 0.0 {
            let col = problem.x.col(j);
            let z = dot(col, resid) * inv_n + c * old;
            soft_threshold(z, 0.5 * weights[j]) / c
        } else {
            0.0
        };
        if new != old {
            axpy(old - new, problem.x.col(j), resid);
            coef[j] = new;
            max_delta = max_delta.max((new - old).abs());
        }
    }
    max_delta
}

fn solve_ls(
    problem: &Problem,
    weights: &[f64],
    coef: &mut [f64],
    opts: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> SolveOutcome {
    let n = problem.nrows() as f64;
    let p = problem.ncols();
    let mut resid = problem.response.clone();
    for (j, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            axpy(-c, problem.x.col(j), &mut resid);
        }
    }
    let mut record = |coef: &[f64], resid: &[f64]| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(dot(resid, resid) / n + weighted_l1(weights, coef));
        }
    };
    record(coef, &resid);

    let mut sweeps = 0;
    let mut active: Vec<usize> = Vec::with_capacity(p);
    while sweeps < opts.max_sweeps {
        let delta = ls_pass(problem, weights, coef, &mut resid, 0..p);
        sweeps += 1;
        record(coef, &resid);
        if delta < opts.tolerance {
            return SolveOutcome { sweeps, converged: true };
        }
        active.clear();
        active.extend((0..p).filter(|&j| coef[j] != 0.0));
        while sweeps < opts.max_sweeps {
            let delta = ls_pass(problem, weights, coef, &mut resid, active.iter().copied());
            sweeps += 1;
            record(coef, &resid);
            if delta < opts.tolerance {
                break;
            }
        }
    }
    SolveOutcome { sweeps, converged: false }
}

/// Coordinate descent on the IRLS quadratic model (1/2n) Σ wᵢ(rᵢ)² + Σ pen|b|
/// restricted to `working`, where `resid` holds the working response minus
/// the linear predictor at `coef`. Runs on the weighted Gram matrix so a pass
/// costs O(k²) rather than O(nk). Returns the number of passes.
#[allow(clippy::too_many_arguments)]
fn gram_quadratic(
    problem: &Problem,
    weights: &[f64],
    irls_w: &[f64],
    coef: &mut [f64],
    resid: &[f64],
    working: &[usize],
    tol: f64,
    budget: usize,
) -> usize {
    let k = working.len();
    let inv_n = 1.0 / problem.nrows() as f64;
    let cols: Vec<&[f64]> = working.iter().map(|&j| problem.x.col(j)).collect();
    let mut gram = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let v = wdot(cols[a], cols[b], irls_w) * inv_n;
            gram[a * k + b] = v;
            gram[b * k + a] = v;
        }
    }
    // Negative gradient of the quadratic at the current coefficients.
    let mut grad: Vec<f64> = cols.iter().map(|c| wdot(c, resid, irls_w) * inv_n).collect();
    let mut passes = 0;
    while passes < budget {
        let mut max_delta: f64 = 0.0;
        for (a, &j) in working.iter().enumerate() {
            let c = gram[a * k + a];
            let old = coef[j];
            let new = if c > 0.0 { soft_threshold(grad[a] + c * old, weights[j]) / c } else { 0.0 };
            if new != old {
                axpy(old - new, &gram[a * k..(a + 1) * k], &mut grad);
                coef[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        passes += 1;
        if max_delta < tol {
            break;
        }
    }
    passes
}

fn logistic_objective(problem: &Problem, weights: &[f64], coef: &[f64], eta: &[f64]) -> f64 {
    problem.loss_from_eta(eta) + weighted_l1(weights, coef)
}

fn linear_predictor(problem: &Problem, coef: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; problem.nrows()];
    for (j, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            axpy(c, problem.x.col(j), &mut eta);
        }
    }
    eta
}

const MAX_HALVINGS: usize = 40;

/// Working-set IRLS: Newton steps with step halving restricted to `working`,
/// then a full gradient pass that admits any coordinate violating its
/// subgradient condition. Terminates when no coordinate outside the working
/// set violates.
fn solve_logistic(
    problem: &Problem,
    weights: &[f64],
    coef: &mut [f64],
    opts: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> SolveOutcome {
    let n = problem.nrows();
    let p = problem.ncols();
    let inv_n = 1.0 / n as f64;
    let a = &problem.response;

    let mut in_working: Vec<bool> = (0..p)
        .map(|j| coef[j] != 0.0 || weights[j] == 0.0)
        .collect();
    let mut working: Vec<usize> = (0..p).filter(|&j| in_working[j]).collect();

    let mut eta = linear_predictor(problem, coef);
    let mut objective = logistic_objective(problem, weights, coef, &eta);
    if let Some(t) = trace.as_deref_mut() {
        t.push(objective);
    }

    let mut sweeps = 0;
    let mut irls_w = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut gvec = vec![0.0; n];

    let mut last_step = f64::INFINITY;
    loop {
        // IRLS on the working set.
        let mut inner_converged = false;
        while sweeps < opts.max_sweeps {
            for i in 0..n {
                let pi = expit(eta[i]);
                let w = (pi * (1.0 - pi)).max(IRLS_WEIGHT_FLOOR);
                irls_w[i] = w;
                resid[i] = (a[i] - pi) / w;
            }
            let previous = coef.to_vec();
            // Inexact Newton: early quadratic models are solved loosely.
            let inner_tol = opts.tolerance.max(0.01 * last_step);
            sweeps += gram_quadratic(
                problem,
                weights,
                &irls_w,
                coef,
                &resid,
                &working,
                inner_tol,
                opts.max_sweeps - sweeps,
            );

            // Step halving keeps the true objective monotone.
            let proposal = coef.to_vec();
            let mut step = 1.0;
            let mut accepted = false;
            let slack = 1e-12 * objective.abs().max(1.0);
            let mut new_eta = linear_predictor(problem, coef);
            let mut new_objective = logistic_objective(problem, weights, coef, &new_eta);
            for _ in 0..MAX_HALVINGS {
                if new_objective <= objective + slack {
                    accepted = true;
                    break;
                }
                step *= 0.5;
                for &j in &working {
                    coef[j] = previous[j] + step * (proposal[j] - previous[j]);
                }
                new_eta = linear_predictor(problem, coef);
                new_objective = logistic_objective(problem, weights, coef, &new_eta);
            }
            if !accepted {
                // No descent left at machine precision.
                coef.copy_from_slice(&previous);
                inner_converged = true;
                break;
            }

            let delta = working
                .iter()
                .map(|&j| (coef[j] - previous[j]).abs())
                .fold(0.0, f64::max);
            eta = new_eta;
            objective = new_objective;
            last_step = delta;
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective);
            }
            if delta < opts.tolerance && inner_tol <= opts.tolerance {
                inner_converged = true;
                break;
            }
            // Every fitted probability pinned at the clip bounds: the data
            // are separated and the minimizer lies at infinity.
            let saturated = eta.iter().all(|&e| {
                let pi = expit(e);
                pi <= PROB_CLIP || pi >= 1.0 - PROB_CLIP
            });
            if saturated {
                return SolveOutcome { sweeps, converged: false };
            }
        }
        if !inner_converged {
            return SolveOutcome { sweeps, converged: false };
        }

        // Subgradient check over the coordinates outside the working set.
        for i in 0..n {
            gvec[i] = (expit(eta[i]) - a[i]) * inv_n;
        }
        sweeps += 1;
        let before = working.len();
        for j in 0..p {
            if !in_working[j] && dot(problem.x.col(j), &gvec).abs() > weights[j] {
                in_working[j] = true;
                working.push(j);
            }
        }
        if working.len() == before {
            return SolveOutcome { sweeps, converged: true };
        }
        if sweeps >= opts.max_sweeps {
            return SolveOutcome { sweeps, converged: false };
        }
        working.sort_unstable();
    }
}
