//! Two-stage minimization: simulated annealing for global exploration, then
//! BFGS for local refinement.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MicError, Result};
use crate::mic::{w, MicObjective};

pub const DEFAULT_SEED: u64 = 818;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Objective evaluations spent by simulated annealing.
    pub maxit_global: usize,
    /// BFGS iteration budget.
    pub maxit_local: usize,
    pub seed: u64,
    pub sa_initial_temp: f64,
    /// Number of proposals per temperature level.
    pub sa_temp_anneals_per: usize,
    pub proposal_sd: f64,
    /// Convergence threshold on the sup-norm of the gradient.
    pub local_grad_tol: f64,
    /// Independent runs (seeds `seed`, `seed + 1`, ...); the lowest objective wins.
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            maxit_global: 300,
            maxit_local: 100,
            seed: DEFAULT_SEED,
            sa_initial_temp: 10.0,
            sa_temp_anneals_per: 10,
            proposal_sd: 0.1,
            local_grad_tol: 1e-5,
            restarts: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(MicError::Config(format!("optimizer: {what}")));
        if self.maxit_global == 0 || self.maxit_local == 0 || self.restarts == 0 {
            return bad("iteration budgets and restarts must be at least 1");
        }
        if self.sa_temp_anneals_per == 0 {
            return bad("sa_temp_anneals_per must be at least 1");
        }
        if !(self.sa_initial_temp > 0.0) || !(self.proposal_sd > 0.0) {
            return bad("temperature and proposal sd must be positive");
        }
        if !(self.local_grad_tol > 0.0) {
            return bad("local_grad_tol must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub converged: bool,
    /// Sup-norm of the gradient at the returned point (local stage only).
    pub grad_norm: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub global: StageReport,
    pub local: StageReport,
    /// Coordinates set to exactly zero after the local stage.
    pub snapped: usize,
    /// Restart index (0-based) that produced the returned point.
    pub restart: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub report: StageReport,
}

/// Metropolis simulated annealing with logarithmic cooling.
///
/// Temperature is `T0 / ln(k + e)` where `k` advances by
/// `sa_temp_anneals_per` after each block of that many proposals. Proposals
/// are independent Gaussian steps of sd `proposal_sd` per coordinate. The
/// best point seen is returned, so the result is never worse than `start`.
pub fn sa_minimize<F>(objective: F, start: &[f64], cfg: &OptimizerConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let clock = Instant::now();
    let initial = objective(start)?;
    if !initial.is_finite() {
        return Err(MicError::Domain(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = start.to_vec();
    let mut current_value = initial;
    let mut best = current.clone();
    let mut best_value = initial;
    let mut proposal = vec![0.0; start.len()];

    for it in 0..cfg.maxit_global {
        let level = (it / cfg.sa_temp_anneals_per) * cfg.sa_temp_anneals_per;
        let temp = cfg.sa_initial_temp / (level as f64 + std::f64::consts::E).ln();
        for (p, c) in proposal.iter_mut().zip(&current) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p = c + cfg.proposal_sd * z;
        }
        let value = match objective(&proposal) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        };
        let u: f64 = rng.random();
        let delta = value - current_value;
        if delta <= 0.0 || u < (-delta / temp).exp() {
            current.copy_from_slice(&proposal);
            current_value = value;
            if value < best_value {
                best.copy_from_slice(&proposal);
                best_value = value;
            }
        }
    }
    Ok(Minimum {
        x: best,
        value: best_value,
        report: StageReport {
            iterations: cfg.maxit_global,
            evaluations: cfg.maxit_global + 1,
            initial_value: initial,
            final_value: best_value,
            converged: true,
            grad_norm: None,
            seconds: clock.elapsed().as_secs_f64(),
        },
    })
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 40;
/// Relative slack on the objective for the approximate Wolfe test.
const VALUE_NOISE: f64 = 1e-10;

/// Approximate Wolfe conditions (Hager-Zhang): near a minimizer the
/// sufficient-decrease test cannot be resolved in floating point, so a
/// step is also accepted when the value has not risen beyond rounding slack
/// and the directional derivative has flattened enough.
fn approx_wolfe(value: f64, slope0: f64, cur: &Probe, d: &DVector<f64>) -> bool {
    let slack = VALUE_NOISE * value.abs().max(1.0);
    if !(cur.value <= value + slack) {
        return false;
    }
    let slope = cur.grad.dot(d);
    slope >= WOLFE_C2 * slope0 && slope <= -0.8 * slope0
}

struct Probe {
    alpha: f64,
    x: Vec<f64>,
    value: f64,
    grad: DVector<f64>,
}

/// Evaluates at `x + alpha d`; evaluation failures are reported as an
/// infinite value so the line search backs off.
fn probe<F>(f: &F, x: &[f64], d: &DVector<f64>, alpha: f64, evals: &mut usize) -> Probe
where
    F: Fn(&[f64]) -> Result<(f64, DVector<f64>)>,
{
    let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
    *evals += 1;
    match f(&xn) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|v| v.is_finite()) => Probe {
            alpha,
            x: xn,
            value: v,
            grad: g,
        },
        _ => Probe {
            alpha,
            x: xn,
            value: f64::INFINITY,
            grad: DVector::zeros(d.len()),
        },
    }
}

/// Minimizer of the cubic interpolating values and slopes at two points,
/// safeguarded to lie well inside the bracket.
fn interpolate(lo: &Probe, hi: &Probe, dlo: f64, dhi: f64) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let fallback = a + 0.5 * width;
    if !hi.value.is_finite() {
        return fallback;
    }
    let d1 = dlo + dhi - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - dlo * dhi;
    if disc < 0.0 {
        return fallback;
    }
    let d2 = disc.sqrt() * (b - a).signum();
    let t = b - (b - a) * (dhi + d2 - d1) / (dhi - dlo + 2.0 * d2);
    let (lo_b, hi_b) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi_b - lo_b);
    if t.is_finite() && t > lo_b + margin && t < hi_b - margin {
        t
    } else {
        fallback
    }
}

/// Line search for a step satisfying the strong Wolfe conditions.
fn strong_wolfe<F>(
    f: &F,
    x: &[f64],
    value: f64,
    grad: &DVector<f64>,
    d: &DVector<f64>,
    alpha0: f64,
    evals: &mut usize,
) -> Option<Probe>
where
    F: Fn(&[f64]) -> Result<(f64, DVector<f64>)>,
{
    let slope0 = grad.dot(d);
    let start = Probe {
        alpha: 0.0,
        x: x.to_vec(),
        value,
        grad: grad.clone(),
    };
    let mut prev = start;
    let mut alpha = alpha0;
    for i in 0..MAX_LINE_SEARCH {
        let cur = probe(f, x, d, alpha, evals);
        if approx_wolfe(value, slope0, &cur, d) {
            return Some(cur);
        }
        if cur.value > value + WOLFE_C1 * alpha * slope0 || (i > 0 && cur.value >= prev.value) {
            return zoom(f, x, value, slope0, d, prev, cur, evals);
        }
        let slope = cur.grad.dot(d);
        if slope.abs() <= -WOLFE_C2 * slope0 {
            return Some(cur);
        }
        if slope >= 0.0 {
            return zoom(f, x, value, slope0, d, cur, prev, evals);
        }
        prev = cur;
        alpha *= 2.0;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &F,
    x: &[f64],
    value: f64,
    slope0: f64,
    d: &DVector<f64>,
    mut lo: Probe,
    mut hi: Probe,
    evals: &mut usize,
) -> Option<Probe>
where
    F: Fn(&[f64]) -> Result<(f64, DVector<f64>)>,
{
    for _ in 0..MAX_LINE_SEARCH {
        let dlo = lo.grad.dot(d);
        let dhi = hi.grad.dot(d);
        let alpha = interpolate(&lo, &hi, dlo, dhi);
        if (alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let cur = probe(f, x, d, alpha, evals);
        if approx_wolfe(value, slope0, &cur, d) {
            return Some(cur);
        }
        if cur.value > value + WOLFE_C1 * alpha * slope0 || cur.value >= lo.value {
            hi = cur;
        } else {
            let slope = cur.grad.dot(d);
            if slope.abs() <= -WOLFE_C2 * slope0 {
                return Some(cur);
            }
            if slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Accept a point with sufficient decrease even if curvature failed.
    (lo.alpha > 0.0 && lo.value < value).then_some(lo)
}

/// BFGS with an inverse-Hessian update and a strong Wolfe line search.
///
/// Stops when the gradient sup-norm drops below `local_grad_tol` or after
/// `maxit_local` iterations. A failed line search ends the run with the best
/// iterate and `converged = false`.
pub fn bfgs_minimize<F>(objective_grad: F, start: &[f64], cfg: &OptimizerConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<(f64, DVector<f64>)>,
{
    let clock = Instant::now();
    let n = start.len();
    let (mut value, mut grad) = objective_grad(start)?;
    if !value.is_finite() {
        return Err(MicError::Domain(
            "objective is not finite at the starting point".into(),
        ));
    }
    let initial = value;
    let mut x = start.to_vec();
    let mut evals = 1;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut iterations = 0;
    let mut converged = grad.amax() < cfg.local_grad_tol;

    while !converged && iterations < cfg.maxit_local {
        let mut d = -(&h * &grad);
        if grad.dot(&d) >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -grad.clone();
        }
        let alpha0 = if first { (1.0 / grad.amax()).min(1.0) } else { 1.0 };
        let Some(step) = strong_wolfe(&objective_grad, &x, value, &grad, &d, alpha0, &mut evals)
        else {
            break;
        };
        iterations += 1;
        let s = DVector::from_iterator(n, step.x.iter().zip(&x).map(|(a, b)| a - b));
        let y = &step.grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 y'Hy + rho) s s'
            h -= rho * (&s * hy.transpose() + &hy * s.transpose());
            h += (rho * rho * yhy + rho) * (&s * s.transpose());
            first = false;
        }
        x = step.x;
        value = step.value;
        grad = step.grad;
        converged = grad.amax() < cfg.local_grad_tol;
    }
    Ok(Minimum {
        report: StageReport {
            iterations,
            evaluations: evals,
            initial_value: initial,
            final_value: value,
            converged,
            grad_norm: Some(grad.amax()),
            seconds: clock.elapsed().as_secs_f64(),
        },
        x,
        value,
    })
}

/// Zeroes every coordinate whose coefficient `|beta_j|` is below `zero_tol`,
/// keeping any coordinate whose removal would raise the objective by more
/// than 1e-6. Setting `gamma_j = 0` keeps `beta_j = 0` iff `gamma_j = 0`.
fn snap_zeros(obj: &MicObjective, gamma: &mut [f64], value: &mut f64, zero_tol: f64) -> Result<usize> {
    let a = obj.penalty().a;
    let small: Vec<usize> = (0..gamma.len())
        .filter(|&j| gamma[j] != 0.0 && (gamma[j] * w(gamma[j], a)).abs() < zero_tol)
        .collect();
    if small.is_empty() {
        return Ok(0);
    }
    let mut trial = gamma.to_vec();
    for &j in &small {
        trial[j] = 0.0;
    }
    let v = obj.value(&trial)?;
    if v <= *value + 1e-6 {
        gamma.copy_from_slice(&trial);
        *value = v;
        return Ok(small.len());
    }
    let mut snapped = 0;
    for &j in &small {
        let old = gamma[j];
        gamma[j] = 0.0;
        let v = obj.value(gamma)?;
        if v <= *value + 1e-6 {
            *value = v;
            snapped += 1;
        } else {
            gamma[j] = old;
        }
    }
    Ok(snapped)
}

/// Minimizes Q over gamma from `start`: annealing, BFGS, then zero snapping.
pub fn minimize_mic(
    obj: &MicObjective,
    start: &[f64],
    cfg: &OptimizerConfig,
    zero_tol: f64,
) -> Result<(Vec<f64>, f64, OptimizerReport)> {
    cfg.validate()?;
    if start.len() != obj.p() {
        return Err(MicError::Config(format!(
            "starting vector has length {}, expected {}",
            start.len(),
            obj.p()
        )));
    }
    let mut best: Option<(Vec<f64>, f64, OptimizerReport)> = None;
    for restart in 0..cfg.restarts {
        let run_cfg = OptimizerConfig {
            seed: cfg.seed.wrapping_add(restart as u64),
            ..cfg.clone()
        };
        let global = sa_minimize(|g| obj.value(g), start, &run_cfg)?;
        let local = bfgs_minimize(|g| obj.value_gradient(g), &global.x, &run_cfg)?;
        let (mut gamma, mut value, mut local_report) = if local.value <= global.value {
            (local.x, local.value, local.report)
        } else {
            let mut r = local.report;
            r.final_value = global.value;
            (global.x, global.value, r)
        };
        let snapped = snap_zeros(obj, &mut gamma, &mut value, zero_tol)?;
        if snapped > 0 {
            local_report.final_value = value;
            let g = obj.gradient(&gamma)?;
            local_report.grad_norm = Some(g.amax());
        }
        let report = OptimizerReport {
            global: global.report,
            local: local_report,
            snapped,
            restart,
        };
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((gamma, value, report));
        }
    }
    Ok(best.expect("at least one restart"))
}
