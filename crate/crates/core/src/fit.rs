//! End-to-end estimation: preprocessing, starting values, optimization and
//! inference assembled into a [`FitResult`].

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{MicError, Result};
use crate::inference::{self, VcovMethod, WaldTest};
use crate::mic::{beta_of, Criterion, MicObjective, MicPenalty};
use crate::optim::{minimize_mic, OptimizerConfig, OptimizerReport};
use crate::partial::{fit_mple, fit_ridge, NewtonOptions};

/// `sqrt(f64::EPSILON)`; |gamma_j| below this is reported as exactly zero.
pub const DEFAULT_ZERO_TOL: f64 = 1.4901161193847656e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum StartPolicy {
    Mple,
    Ridge(f64),
    Zero,
    User(Vec<f64>),
}

impl StartPolicy {
    pub fn starting_beta(&self, ds: &SurvivalDataset, newton: NewtonOptions) -> Result<Vec<f64>> {
        match self {
            StartPolicy::Mple => fit_mple(ds, newton),
            StartPolicy::Ridge(theta0) => fit_ridge(ds, *theta0, newton),
            StartPolicy::Zero => Ok(vec![0.0; ds.p()]),
            StartPolicy::User(b) => {
                if b.len() != ds.p() {
                    return Err(MicError::Config(format!(
                        "user starting vector has length {}, expected {}",
                        b.len(),
                        ds.p()
                    )));
                }
                Ok(b.clone())
            }
        }
    }
}

/// `sign(beta_j) * I(|beta_j| > c0)`, a 0/+1/-1 starting vector.
pub fn thresholded_start(beta: &[f64], c0: f64) -> Vec<f64> {
    beta.iter()
        .map(|&b| if b.abs() > c0 { b.signum() } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicConfig {
    pub criterion: Criterion,
    /// Overrides the default `a = n_events`.
    pub a: Option<f64>,
    pub start: StartPolicy,
    pub standardize: bool,
    pub optimizer: OptimizerConfig,
    pub newton: NewtonOptions,
    pub zero_tol: f64,
    pub conf_level: f64,
    pub vcov_method: VcovMethod,
}

impl Default for MicConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Bic,
            a: None,
            start: StartPolicy::Mple,
            standardize: true,
            optimizer: OptimizerConfig::default(),
            newton: NewtonOptions::default(),
            zero_tol: DEFAULT_ZERO_TOL,
            conf_level: 0.95,
            vcov_method: VcovMethod::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub n: usize,
    pub n_events: usize,
    pub penalty: MicPenalty,
    pub beta0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub vcov_gamma: Vec<Vec<f64>>,
    pub se_gamma: Vec<f64>,
    /// `None` where the Wald test is undefined.
    pub tests: Vec<Option<WaldTest>>,
    /// `None` on unselected coordinates.
    pub se_beta: Vec<Option<f64>>,
    pub min_q: f64,
    pub bic: f64,
    pub vcov_pseudo_inverse: bool,
    pub vcov_clamped: bool,
    pub report: OptimizerReport,
    pub config: MicConfig,
}

impl FitResult {
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    pub fn selected_names(&self) -> Vec<&str> {
        self.support().into_iter().map(|j| self.names[j].as_str()).collect()
    }

    pub fn converged(&self) -> bool {
        self.report.local.converged
    }
}

/// Prepares the working dataset: standardized when the config asks for it.
pub fn prepare(ds: &SurvivalDataset, cfg: &MicConfig) -> Result<SurvivalDataset> {
    if cfg.standardize {
        ds.standardize()
    } else {
        Ok(ds.clone())
    }
}

/// Runs the optimizer only, on an already prepared dataset.
pub fn estimate(
    work: &SurvivalDataset,
    pen: MicPenalty,
    beta0: &[f64],
    cfg: &MicConfig,
) -> Result<(Vec<f64>, f64, OptimizerReport)> {
    let obj = MicObjective::new(work, pen);
    minimize_mic(&obj, beta0, &cfg.optimizer, cfg.zero_tol)
}

/// Full fit: preprocessing, starting point, two-stage optimization, and
/// inference on gamma and on the nonzero part of beta.
pub fn fit(ds: &SurvivalDataset, cfg: &MicConfig) -> Result<FitResult> {
    let work = prepare(ds, cfg)?;
    let beta0 = cfg.start.starting_beta(&work, cfg.newton)?;
    fit_prepared(&work, beta0, cfg)
}

/// Same as [`fit`] on a prepared dataset with a known starting vector.
pub fn fit_prepared(work: &SurvivalDataset, beta0: Vec<f64>, cfg: &MicConfig) -> Result<FitResult> {
    let pen = MicPenalty::for_dataset(work, cfg.criterion, cfg.a)?;
    let (gamma, min_q, report) = estimate(work, pen, &beta0, cfg)?;
    let beta = beta_of(&gamma, pen.a);
    let vcov = inference::vcov_gamma(work, &gamma, pen, cfg.vcov_method)?;
    let se_gamma = vcov.standard_errors();
    let tests = inference::test_gamma(&gamma, &se_gamma, cfg.conf_level)?;
    let se_beta = inference::se_beta(work, &gamma, pen)?;
    let bic = inference::model_bic(work, &beta)?;
    let p = gamma.len();
    Ok(FitResult {
        names: work.names().to_vec(),
        n: work.n(),
        n_events: work.n_events(),
        penalty: pen,
        beta0,
        gamma,
        beta,
        vcov_gamma: (0..p)
            .map(|i| (0..p).map(|j| vcov.matrix[(i, j)]).collect())
            .collect(),
        se_gamma,
        tests,
        se_beta,
        min_q,
        bic,
        vcov_pseudo_inverse: vcov.pseudo_inverse,
        vcov_clamped: vcov.clamped,
        report,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_start_signs() {
        let b = [-0.0622, 0.3041, 0.0224, -0.2999, 0.06];
        assert_eq!(thresholded_start(&b, 0.06), vec![-1.0, 1.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn user_start_length_checked() {
        let ds = SurvivalDataset::new(
            vec![1.0, 2.0],
            vec![1, 0],
            nalgebra::DMatrix::zeros(2, 2),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let r = StartPolicy::User(vec![0.0]).starting_beta(&ds, NewtonOptions::default());
        assert!(matches!(r, Err(MicError::Config(_))));
    }
}
