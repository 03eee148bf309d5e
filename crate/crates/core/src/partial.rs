//! Cox partial log-likelihood with Breslow risk sets, its score and observed
//! information, plus Newton solvers for the MPLE and the ridge estimator.
//!
//! Every evaluation is a single sweep over subjects in descending time order
//! with running risk-set sums, so cost is O(n p) for the likelihood and score
//! and O(n p^2) for the information.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{MicError, Result};

/// Flush threshold for the running product of risk-set sums.
const PRODUCT_FLUSH: f64 = 1e150;

/// Sort order and tie structure of one dataset, plus a row-major copy of the
/// covariates in that order.
#[derive(Debug, Clone)]
pub struct LikelihoodWorkspace {
    n: usize,
    p: usize,
    /// `order[k]` is the original row of the k-th longest time.
    order: Vec<usize>,
    /// Tie groups as half-open ranges over sorted positions.
    groups: Vec<(usize, usize)>,
    event: Vec<bool>,
    x: Vec<f64>,
}

impl LikelihoodWorkspace {
    pub fn new(ds: &SurvivalDataset) -> Self {
        let n = ds.n();
        let p = ds.p();
        let time = ds.time();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));

        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || time[order[k]] != time[order[start]] {
                groups.push((start, k));
                start = k;
            }
        }
        let event = order.iter().map(|&i| ds.status()[i] == 1).collect();
        let cov = ds.covariates();
        let mut x = Vec::with_capacity(n * p);
        for &i in &order {
            x.extend((0..p).map(|j| cov[(i, j)]));
        }
        Self {
            n,
            p,
            order,
            groups,
            event,
            x,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Original row indices sorted by descending time.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.p..(k + 1) * self.p]
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p {
            return Err(MicError::Domain(format!(
                "coefficient vector has length {}, expected {}",
                beta.len(),
                self.p
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(MicError::Domain("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Linear predictors in sorted order.
    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let eta: Vec<f64> = if self.p == 0 {
            vec![0.0; self.n]
        } else {
            self.x
                .chunks_exact(self.p)
                .map(|row| row.iter().zip(beta).map(|(x, b)| x * b).sum())
                .collect()
        };
        eta
    }

    fn sweep(&self, beta: &[f64], want: Want) -> Result<Evaluation> {
        self.check_beta(beta)?;
        let p = self.p;
        let eta = self.linear_predictor(beta);
        // Risk-set sums are kept relative to exp(shift), the largest
        // predictor seen so far, so s0 >= 1 whenever it is used.
        let mut shift = f64::NEG_INFINITY;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = if want.information {
            vec![0.0; p * p]
        } else {
            Vec::new()
        };
        let mut loglik = 0.0;
        // Product of single-event denominators, logged when it grows large,
        // to avoid one logarithm per event.
        let mut log_product = 1.0;
        let mut score = vec![0.0; if want.score { p } else { 0 }];
        let mut info = vec![0.0; if want.information { p * p } else { 0 }];

        for &(start, end) in &self.groups {
            let group_max = eta[start..end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if group_max > shift {
                let factor = (shift - group_max).exp();
                s0 *= factor;
                s1.iter_mut().for_each(|v| *v *= factor);
                s2.iter_mut().for_each(|v| *v *= factor);
                shift = group_max;
            }
            for k in start..end {
                let r = (eta[k] - shift).exp();
                s0 += r;
                if want.score || want.information {
                    let x = self.row(k);
                    for (acc, xj) in s1.iter_mut().zip(x) {
                        *acc += r * xj;
                    }
                    if want.information {
                        for a in 0..p {
                            let rxa = r * x[a];
                            for b in a..p {
                                s2[a * p + b] += rxa * x[b];
                            }
                        }
                    }
                }
            }
            let mut d = 0usize;
            for k in start..end {
                if self.event[k] {
                    d += 1;
                    loglik += eta[k];
                    if want.score {
                        for (u, xj) in score.iter_mut().zip(self.row(k)) {
                            *u += xj;
                        }
                    }
                }
            }
            if d == 0 {
                continue;
            }
            loglik -= d as f64 * shift;
            if d == 1 {
                log_product *= s0;
                if log_product > PRODUCT_FLUSH {
                    loglik -= log_product.ln();
                    log_product = 1.0;
                }
            } else {
                loglik -= d as f64 * s0.ln();
            }
            let d = d as f64;
            if want.score {
                for (u, a) in score.iter_mut().zip(&s1) {
                    *u -= d * a / s0;
                }
            }
            if want.information {
                for a in 0..p {
                    let ma = s1[a] / s0;
                    for b in a..p {
                        info[a * p + b] += d * (s2[a * p + b] / s0 - ma * s1[b] / s0);
                    }
                }
            }
        }
        loglik -= log_product.ln();
        if !loglik.is_finite() {
            return Err(MicError::Domain(
                "partial log-likelihood is not finite".into(),
            ));
        }
        let information = want.information.then(|| {
            DMatrix::from_fn(p, p, |a, b| {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                info[lo * p + hi]
            })
        });
        Ok(Evaluation {
            loglik,
            score: want.score.then(|| DVector::from_vec(score)),
            information,
        })
    }

    pub fn loglik(&self, beta: &[f64]) -> Result<f64> {
        Ok(self.sweep(beta, Want::VALUE)?.loglik)
    }

    pub fn score(&self, beta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.sweep(beta, Want::SCORE)?.score.unwrap())
    }

    /// Log-likelihood and score from one sweep.
    pub fn loglik_score(&self, beta: &[f64]) -> Result<(f64, DVector<f64>)> {
        let e = self.sweep(beta, Want::SCORE)?;
        Ok((e.loglik, e.score.unwrap()))
    }

    /// Observed information, `-d^2 l / d beta^2`.
    pub fn information(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.sweep(beta, Want::ALL)?.information.unwrap())
    }

    pub fn evaluate_all(&self, beta: &[f64]) -> Result<Evaluation> {
        self.sweep(beta, Want::ALL)
    }
}

#[derive(Clone, Copy)]
struct Want {
    score: bool,
    information: bool,
}

impl Want {
    const VALUE: Want = Want {
        score: false,
        information: false,
    };
    const SCORE: Want = Want {
        score: true,
        information: false,
    };
    const ALL: Want = Want {
        score: true,
        information: true,
    };
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loglik: f64,
    pub score: Option<DVector<f64>>,
    pub information: Option<DMatrix<f64>>,
}

pub fn loglik(ds: &SurvivalDataset, beta: &[f64]) -> Result<f64> {
    LikelihoodWorkspace::new(ds).loglik(beta)
}

pub fn score(ds: &SurvivalDataset, beta: &[f64]) -> Result<DVector<f64>> {
    LikelihoodWorkspace::new(ds).score(beta)
}

pub fn information(ds: &SurvivalDataset, beta: &[f64]) -> Result<DMatrix<f64>> {
    LikelihoodWorkspace::new(ds).information(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Convergence threshold on the sup-norm of the (penalized) score.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            max_halvings: 20,
        }
    }
}

/// Maximum partial likelihood estimate by Newton-Raphson with step halving.
pub fn fit_mple(ds: &SurvivalDataset, opts: NewtonOptions) -> Result<Vec<f64>> {
    penalized_newton(&LikelihoodWorkspace::new(ds), 0.0, opts)
}

/// Minimizer of `-2 l(beta) + theta0 * sum(beta_j^2)`.
pub fn fit_ridge(ds: &SurvivalDataset, theta0: f64, opts: NewtonOptions) -> Result<Vec<f64>> {
    if !(theta0 >= 0.0 && theta0.is_finite()) {
        return Err(MicError::Config(format!(
            "ridge penalty must be nonnegative and finite, got {theta0}"
        )));
    }
    penalized_newton(&LikelihoodWorkspace::new(ds), theta0, opts)
}

/// Relative Newton-decrement threshold for declaring convergence.
const DECREMENT_RTOL: f64 = 1e-13;

/// Newton on `-l(beta) + theta/2 * |beta|^2`, which has the same minimizer as
/// the `-2 l + theta |beta|^2` form.
pub fn penalized_newton(
    ws: &LikelihoodWorkspace,
    theta: f64,
    opts: NewtonOptions,
) -> Result<Vec<f64>> {
    let p = ws.p();
    let objective = |b: &[f64]| -> Result<f64> {
        Ok(-ws.loglik(b)? + 0.5 * theta * b.iter().map(|v| v * v).sum::<f64>())
    };
    let mut beta = vec![0.0; p];
    let mut current = objective(&beta)?;
    let mut max_abs_score = f64::INFINITY;
    for _ in 0..=opts.max_iter {
        let e = ws.evaluate_all(&beta)?;
        let grad = e.score.unwrap() - theta * DVector::from_column_slice(&beta);
        max_abs_score = grad.amax();
        if max_abs_score < opts.tol {
            return Ok(beta);
        }
        let hess = e.information.unwrap() + DMatrix::identity(p, p) * theta;
        let step = hess
            .cholesky()
            .ok_or_else(|| {
                MicError::RankDeficient("Newton system could not be factorized".into())
            })?
            .solve(&grad);
        // Predicted decrease below rounding of the objective: the iterate
        // is optimal to working precision.
        if 0.5 * grad.dot(&step) <= DECREMENT_RTOL * (1.0 + current.abs()) {
            return Ok(beta);
        }

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            if let Ok(v) = objective(&trial) {
                if v <= current {
                    beta = trial;
                    current = v;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(MicError::Convergence {
        iterations: opts.max_iter,
        max_abs_score,
        last: beta,
    })
}
