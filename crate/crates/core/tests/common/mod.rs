#![allow(dead_code)]

use std::path::PathBuf;

use coxmic::data::load_csv_with_recodes;
use coxmic::SurvivalDataset;
use nalgebra::DMatrix;

pub fn pbc_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pbc.csv")
}

/// PBC with the documented recodes: death (status 2) is the event, female is 1.
pub fn pbc() -> SurvivalDataset {
    let recodes = vec![
        "status=2:1,*:0".parse().unwrap(),
        "sex=f:1,*:0".parse().unwrap(),
    ];
    load_csv_with_recodes(pbc_path(), "time", "status", &["id".to_string()], &recodes).unwrap()
}

pub fn dataset(time: Vec<f64>, status: Vec<u8>, z: Vec<f64>, p: usize) -> SurvivalDataset {
    let n = time.len();
    SurvivalDataset::new(
        time,
        status,
        DMatrix::from_row_slice(n, p, &z),
        (1..=p).map(|j| format!("x{j}")).collect(),
    )
    .unwrap()
}

fn eta(ds: &SurvivalDataset, beta: &[f64], i: usize) -> f64 {
    (0..ds.p()).map(|j| ds.covariates()[(i, j)] * beta[j]).sum()
}

/// Double loop over events and risk sets with no sorting, no shifting and no
/// shared sums.
pub fn naive_loglik(ds: &SurvivalDataset, beta: &[f64]) -> f64 {
    let t = ds.time();
    let mut l = 0.0;
    for i in 0..ds.n() {
        if ds.status()[i] == 0 {
            continue;
        }
        let denom: f64 = (0..ds.n())
            .filter(|&k| t[k] >= t[i])
            .map(|k| eta(ds, beta, k).exp())
            .sum();
        l += eta(ds, beta, i) - denom.ln();
    }
    l
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut pt = x.to_vec();
    (0..x.len())
        .map(|j| {
            pt[j] = x[j] + h;
            let fp = f(&pt);
            pt[j] = x[j] - h;
            let fm = f(&pt);
            pt[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| <= tol * max(1, |a|, |b|)`
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
