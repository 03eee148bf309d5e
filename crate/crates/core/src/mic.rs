//! The approximated information criterion.
//!
//! The l0 model-size penalty `sum I(beta_j != 0)` is replaced by the smooth
//! surrogate `sum tanh(a gamma_j^2)`, and coefficients are reparameterized as
//! `beta_j = gamma_j tanh(a gamma_j^2)`. The objective
//!
//! ```text
//! Q(gamma) = -2 l(beta(gamma)) + lambda0 * sum_j tanh(a gamma_j^2)
//! ```
//!
//! is smooth in `gamma`, and `beta_j` is exactly zero iff `gamma_j` is.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{MicError, Result};
use crate::partial::LikelihoodWorkspace;

/// Above this value of `a gamma^2`, tanh is treated as saturated.
const SATURATION: f64 = 350.0;

/// Information criterion whose model-size penalty is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// `lambda0 = ln(n_events)`
    Bic,
    /// `lambda0 = 2`
    Aic,
    Custom(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicPenalty {
    pub a: f64,
    pub lambda0: f64,
}

impl MicPenalty {
    pub fn new(a: f64, lambda0: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(MicError::Config(format!("a must be positive, got {a}")));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(MicError::Config(format!(
                "lambda0 must be positive, got {lambda0}"
            )));
        }
        Ok(Self { a, lambda0 })
    }

    /// Defaults `a = n_events`, `lambda0 = ln(n_events)`.
    pub fn bic(n_events: usize) -> Result<Self> {
        Self::new(n_events as f64, (n_events as f64).ln())
    }

    /// Resolves a criterion and an optional `a` override against a dataset.
    pub fn for_dataset(ds: &SurvivalDataset, criterion: Criterion, a: Option<f64>) -> Result<Self> {
        let n0 = ds.n_events() as f64;
        let lambda0 = match criterion {
            Criterion::Bic => n0.ln(),
            Criterion::Aic => 2.0,
            Criterion::Custom(v) => v,
        };
        Self::new(a.unwrap_or(n0), lambda0)
    }
}

/// `tanh(a gamma^2)`, the smooth indicator of `gamma != 0`.
pub fn w(gamma: f64, a: f64) -> f64 {
    (a * gamma * gamma).tanh()
}

/// `sech^2(x)` computed as `1 - tanh^2(x)` clamped to [0, 1].
fn sech2_from_tanh(t: f64) -> f64 {
    (1.0 - t * t).clamp(0.0, 1.0)
}

pub fn beta_of(gamma: &[f64], a: f64) -> Vec<f64> {
    gamma.iter().map(|&g| g * w(g, a)).collect()
}

/// `d beta_j / d gamma_j = tanh(a g^2) + 2 a g^2 sech^2(a g^2)`.
pub fn dbeta_dgamma(gamma: f64, a: f64) -> f64 {
    let x = a * gamma * gamma;
    if x > SATURATION {
        return 1.0;
    }
    let t = x.tanh();
    t + 2.0 * x * sech2_from_tanh(t)
}

/// `d tanh(a g^2) / d g = 2 a g sech^2(a g^2)`.
pub fn dpenalty_dgamma(gamma: f64, a: f64) -> f64 {
    let x = a * gamma * gamma;
    if x > SATURATION {
        return 0.0;
    }
    2.0 * a * gamma * sech2_from_tanh(x.tanh())
}

pub fn penalty_sum(gamma: &[f64], a: f64) -> f64 {
    gamma.iter().map(|&g| w(g, a)).sum()
}

/// Q evaluated through a prepared likelihood workspace.
#[derive(Debug, Clone)]
pub struct MicObjective {
    ws: LikelihoodWorkspace,
    pen: MicPenalty,
}

impl MicObjective {
    pub fn new(ds: &SurvivalDataset, pen: MicPenalty) -> Self {
        Self {
            ws: LikelihoodWorkspace::new(ds),
            pen,
        }
    }

    pub fn penalty(&self) -> MicPenalty {
        self.pen
    }

    pub fn workspace(&self) -> &LikelihoodWorkspace {
        &self.ws
    }

    pub fn p(&self) -> usize {
        self.ws.p()
    }

    pub fn value(&self, gamma: &[f64]) -> Result<f64> {
        let MicPenalty { a, lambda0 } = self.pen;
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(MicError::Domain("non-finite gamma".into()));
        }
        let beta = beta_of(gamma, a);
        Ok(-2.0 * self.ws.loglik(&beta)? + lambda0 * penalty_sum(gamma, a))
    }

    pub fn value_gradient(&self, gamma: &[f64]) -> Result<(f64, DVector<f64>)> {
        let MicPenalty { a, lambda0 } = self.pen;
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(MicError::Domain("non-finite gamma".into()));
        }
        let beta = beta_of(gamma, a);
        let (l, u) = self.ws.loglik_score(&beta)?;
        let value = -2.0 * l + lambda0 * penalty_sum(gamma, a);
        let grad = DVector::from_iterator(
            gamma.len(),
            gamma.iter().zip(u.iter()).map(|(&g, &uj)| {
                -2.0 * dbeta_dgamma(g, a) * uj + lambda0 * dpenalty_dgamma(g, a)
            }),
        );
        Ok((value, grad))
    }

    pub fn gradient(&self, gamma: &[f64]) -> Result<DVector<f64>> {
        Ok(self.value_gradient(gamma)?.1)
    }
}

pub fn q_n(ds: &SurvivalDataset, gamma: &[f64], pen: MicPenalty) -> Result<f64> {
    MicObjective::new(ds, pen).value(gamma)
}

pub fn grad_q_n(ds: &SurvivalDataset, gamma: &[f64], pen: MicPenalty) -> Result<DVector<f64>> {
    MicObjective::new(ds, pen).gradient(gamma)
}
