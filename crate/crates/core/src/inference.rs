//! Standard errors, Wald tests and confidence intervals.
//!
//! Testing `gamma_j = 0` is equivalent to testing `beta_j = 0`, because the
//! reparameterization maps zero to zero and nothing else to zero. The test is
//! available for every coordinate, selected or not.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::SurvivalDataset;
use crate::error::{MicError, Result};
use crate::mic::{beta_of, MicObjective, MicPenalty};
use crate::partial::LikelihoodWorkspace;

/// Finite-difference step for the objective Hessian, on the standardized scale.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VcovMethod {
    /// Inverse observed information of the full partial likelihood at
    /// `beta(gamma)`.
    #[default]
    Information,
    /// Inverse of one half the central-difference Hessian of Q at gamma.
    ObjectiveHessian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcovEstimate {
    pub matrix: DMatrix<f64>,
    /// A pseudo-inverse was used because the curvature matrix was singular or
    /// indefinite.
    pub pseudo_inverse: bool,
    /// Negative diagonal entries were clamped to zero.
    pub clamped: bool,
}

impl VcovEstimate {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.sqrt()).collect()
    }
}

/// Central second differences of `f` at `x`, symmetrized.
pub fn numerical_hessian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let p = x.len();
    let f0 = f(x)?;
    let mut pt = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| -> Result<f64> {
        pt.copy_from_slice(x);
        for &(j, s) in shifts {
            pt[j] += s;
        }
        f(&pt)
    };
    let mut hess = DMatrix::zeros(p, p);
    for j in 0..p {
        let fp = eval(&[(j, h)])?;
        let fm = eval(&[(j, -h)])?;
        hess[(j, j)] = (fp - 2.0 * f0 + fm) / (h * h);
        for k in 0..j {
            let fpp = eval(&[(j, h), (k, h)])?;
            let fpm = eval(&[(j, h), (k, -h)])?;
            let fmp = eval(&[(j, -h), (k, h)])?;
            let fmm = eval(&[(j, -h), (k, -h)])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(j, k)] = v;
            hess[(k, j)] = v;
        }
    }
    Ok(hess)
}

/// Inverse of a symmetric matrix; falls back to an eigen pseudo-inverse
/// when the matrix is not positive definite. Returns the inverse and
/// whether the fallback was taken.
pub fn symmetric_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        let inv = ch.inverse();
        return ((&inv + inv.transpose()) * 0.5, false);
    }
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let cutoff = max * m.nrows() as f64 * f64::EPSILON;
    let inv_vals = eig
        .eigenvalues
        .map(|v| if v.abs() > cutoff { 1.0 / v } else { 0.0 });
    let v = &eig.eigenvectors;
    let inv = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    ((&inv + inv.transpose()) * 0.5, true)
}

fn finish(inv: DMatrix<f64>, pseudo_inverse: bool) -> VcovEstimate {
    let mut matrix = inv;
    let mut clamped = false;
    for j in 0..matrix.nrows() {
        if matrix[(j, j)] < 0.0 {
            matrix[(j, j)] = 0.0;
            clamped = true;
        }
    }
    VcovEstimate {
        matrix,
        pseudo_inverse,
        clamped,
    }
}

/// Covariance of the gamma estimate.
pub fn vcov_gamma(
    ds: &SurvivalDataset,
    gamma: &[f64],
    pen: MicPenalty,
    method: VcovMethod,
) -> Result<VcovEstimate> {
    match method {
        VcovMethod::Information => {
            let beta = beta_of(gamma, pen.a);
            let info = LikelihoodWorkspace::new(ds).information(&beta)?;
            let (inv, pseudo) = symmetric_inverse(&info);
            Ok(finish(inv, pseudo))
        }
        VcovMethod::ObjectiveHessian => {
            let obj = MicObjective::new(ds, pen);
            objective_hessian_vcov(|g| obj.value(g), gamma)
        }
    }
}

/// Inverse of half the numerical Hessian of an objective on the `-2 l`
/// scale.
pub fn objective_hessian_vcov<F>(objective: F, x: &[f64]) -> Result<VcovEstimate>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let h = numerical_hessian(objective, x, HESSIAN_STEP)? * 0.5;
    let (inv, pseudo) = symmetric_inverse(&h);
    Ok(finish(inv, pseudo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided normal quantile for a confidence level, e.g. 1.959964 at 0.95.
pub fn normal_critical_value(conf_level: f64) -> Result<f64> {
    if !(conf_level > 0.0 && conf_level < 1.0) {
        return Err(MicError::Config(format!(
            "confidence level must lie in (0, 1), got {conf_level}"
        )));
    }
    Ok(std_normal().inverse_cdf(0.5 * (1.0 + conf_level)))
}

/// Wald z, two-sided p-value and interval for each coordinate. `None` marks
/// a coordinate with zero standard error and nonzero estimate.
pub fn test_gamma(gamma: &[f64], se: &[f64], conf_level: f64) -> Result<Vec<Option<WaldTest>>> {
    let crit = normal_critical_value(conf_level)?;
    let normal = std_normal();
    Ok(gamma
        .iter()
        .zip(se)
        .map(|(&g, &s)| {
            let z = if s > 0.0 && s.is_finite() {
                g / s
            } else if g == 0.0 && s == 0.0 {
                0.0
            } else {
                return None;
            };
            Some(WaldTest {
                z,
                p_value: 2.0 * normal.cdf(-z.abs()),
                ci_lower: g - crit * s,
                ci_upper: g + crit * s,
            })
        })
        .collect())
}

/// Standard errors for the nonzero coefficients from the observed
/// information of the submodel on the selected columns, evaluated at the
/// estimate without refitting. Unselected coordinates are `None`.
pub fn se_beta(ds: &SurvivalDataset, gamma: &[f64], pen: MicPenalty) -> Result<Vec<Option<f64>>> {
    let beta = beta_of(gamma, pen.a);
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    let mut out = vec![None; beta.len()];
    if support.is_empty() {
        return Ok(out);
    }
    let sub = ds.select_columns(&support);
    let sub_beta: Vec<f64> = support.iter().map(|&j| beta[j]).collect();
    let info = LikelihoodWorkspace::new(&sub).information(&sub_beta)?;
    let Some(ch) = info.cholesky() else {
        return Ok(out);
    };
    let inv = ch.inverse();
    for (k, &j) in support.iter().enumerate() {
        let v = inv[(k, k)];
        out[j] = (v > 0.0).then(|| v.sqrt());
    }
    Ok(out)
}

/// `-2 l(beta) + ln(n_events) * #{j : beta_j != 0}`.
pub fn model_bic(ds: &SurvivalDataset, beta: &[f64]) -> Result<f64> {
    let l = LikelihoodWorkspace::new(ds).loglik(beta)?;
    let df = beta.iter().filter(|&&b| b != 0.0).count();
    Ok(-2.0 * l + (ds.n_events() as f64).ln() * df as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_surrogate_vcov() {
        let c = 7.5;
        let v = objective_hessian_vcov(|g| Ok(c * g[0] * g[0]), &[0.3]).unwrap();
        // half the Hessian is c, so the variance is 1/c
        assert!((v.matrix[(0, 0)] - 1.0 / c).abs() < 1e-6);
        assert!(!v.pseudo_inverse);
    }

    #[test]
    fn numerical_hessian_of_known_function() {
        let f = |x: &[f64]| Ok(x[0] * x[0] * x[1] + 3.0 * x[1] * x[1]);
        let h = numerical_hessian(f, &[1.0, 2.0], 1e-4).unwrap();
        assert!((h[(0, 0)] - 4.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 6.0).abs() < 1e-5);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn singular_matrix_uses_pseudo_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, pseudo) = symmetric_inverse(&m);
        assert!(pseudo);
        // Moore-Penrose inverse of the all-ones 2x2 is 0.25 everywhere.
        for v in inv.iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn wald_columns() {
        let t = test_gamma(&[0.39, 0.0, 0.5], &[0.1, 0.2, 0.0], 0.95).unwrap();
        let a = t[0].unwrap();
        assert!((a.z - 3.9).abs() < 1e-12);
        assert!(((a.ci_upper - 0.39) - 1.959964 * 0.1).abs() < 1e-6);
        let b = t[1].unwrap();
        assert_eq!(b.z, 0.0);
        assert!((b.p_value - 1.0).abs() < 1e-15);
        assert!(t[2].is_none());
    }

    #[test]
    fn p_values_match_printed_pairs() {
        // z and p pairs printed for bili and age
        let t = test_gamma(&[3.4237, 2.7138], &[1.0, 1.0], 0.95).unwrap();
        assert!((t[0].unwrap().p_value - 0.0006).abs() < 5e-5);
        assert!((t[1].unwrap().p_value - 0.0067).abs() < 5e-5);
    }

    #[test]
    fn bad_conf_level() {
        assert!(test_gamma(&[0.1], &[0.1], 1.0).is_err());
    }
}
