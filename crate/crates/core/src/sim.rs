//! Synthetic right-censored data and the timing benchmark against the full
//! MPLE fit and forward-stepwise BIC selection.
//!
//! Simulation model: covariates are Gaussian with unit variance and AR(1)
//! correlation `rho`; event times are exponential with rate
//! `exp(z' beta_true)`; censoring times are `Uniform(0, c)` with `c` chosen
//! by bisection so the realized censoring fraction hits the target.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{MicError, Result};
use crate::fit::{fit, MicConfig};
use crate::partial::{fit_mple, penalized_newton, LikelihoodWorkspace, NewtonOptions};

/// Allowed gap between target and realized censoring.
pub const CENSORING_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub true_beta: Vec<f64>,
    #[serde(default)]
    pub rho: f64,
    pub target_censoring: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimSpec {
    /// `true_beta = (1, 1, 0, ..., 0)` with independent covariates.
    pub fn sparse(n: usize, p: usize, target_censoring: f64, seed: u64) -> Self {
        let mut true_beta = vec![0.0; p];
        for b in true_beta.iter_mut().take(2) {
            *b = 1.0;
        }
        Self {
            n,
            p,
            true_beta,
            rho: 0.0,
            target_censoring,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(MicError::Config("simulation needs n >= 2".into()));
        }
        if self.p == 0 || self.true_beta.len() != self.p {
            return Err(MicError::Config(format!(
                "true_beta has length {}, expected p = {}",
                self.true_beta.len(),
                self.p
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(MicError::Config(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if !(self.target_censoring > 0.0 && self.target_censoring < 1.0) {
            return Err(MicError::Config(format!(
                "target censoring {} outside (0, 1)",
                self.target_censoring
            )));
        }
        Ok(())
    }
}

fn censored_fraction(event: &[f64], unit_censor: &[f64], c: f64) -> f64 {
    let k = event
        .iter()
        .zip(unit_censor)
        .filter(|(t, u)| c * **u < **t)
        .count();
    k as f64 / event.len() as f64
}

pub fn generate(spec: &SimSpec) -> Result<SurvivalDataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innov = (1.0 - spec.rho * spec.rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(&mut rng);
        x[(i, 0)] = prev;
        for j in 1..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = spec.rho * prev + innov * e;
            x[(i, j)] = prev;
        }
    }
    let event: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = (0..p).map(|j| x[(i, j)] * spec.true_beta[j]).sum();
            let u: f64 = Open01.sample(&mut rng);
            -u.ln() / eta.exp()
        })
        .collect();
    let unit_censor: Vec<f64> = (0..n).map(|_| Open01.sample(&mut rng)).collect();

    // Censored fraction decreases in c; bisect on log scale.
    let tmax = event.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (tmax * 1e-12, tmax / unit_censor.iter().copied().fold(1.0, f64::min) * 2.0);
    let target = spec.target_censoring;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if censored_fraction(&event, &unit_censor, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let candidates = [lo, hi];
    let c = *candidates
        .iter()
        .min_by(|a, b| {
            let da = (censored_fraction(&event, &unit_censor, **a) - target).abs();
            let db = (censored_fraction(&event, &unit_censor, **b) - target).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    let achieved = censored_fraction(&event, &unit_censor, c);
    if (achieved - target).abs() > CENSORING_TOLERANCE || achieved >= 1.0 {
        return Err(MicError::Calibration {
            target,
            low: 1.0 / n as f64,
            high: 1.0 - 1.0 / n as f64,
        });
    }

    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let cens = c * unit_censor[i];
        if cens < event[i] {
            time.push(cens);
            status.push(0);
        } else {
            time.push(event[i]);
            status.push(1);
        }
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    SurvivalDataset::new(time, status, x, names)
}

/// Forward selection on `-2 l + ln(n_events) * df`, adding the covariate
/// that lowers the criterion most until none does. Each candidate submodel
/// is refit from zero.
pub fn stepwise_bic(ds: &SurvivalDataset, newton: NewtonOptions) -> Result<(Vec<usize>, f64)> {
    let penalty = (ds.n_events() as f64).ln();
    let null = -2.0 * LikelihoodWorkspace::new(ds).loglik(&vec![0.0; ds.p()])?;
    let mut selected: Vec<usize> = Vec::new();
    let mut current = null;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..ds.p()).filter(|j| !selected.contains(j)) {
            let mut cols = selected.clone();
            cols.push(j);
            let sub = ds.select_columns(&cols);
            let ws = LikelihoodWorkspace::new(&sub);
            let Ok(beta) = penalized_newton(&ws, 0.0, newton) else {
                continue;
            };
            let crit = -2.0 * ws.loglik(&beta)? + penalty * cols.len() as f64;
            if best.is_none_or(|(_, v)| crit < v) {
                best = Some((j, crit));
            }
        }
        match best {
            Some((j, v)) if v < current => {
                selected.push(j);
                current = v;
            }
            _ => break,
        }
    }
    selected.sort_unstable();
    Ok((selected, current))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Mic,
    Mple,
    Stepwise,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Mic => "mic",
            BenchMethod::Mple => "mple",
            BenchMethod::Stepwise => "stepwise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    pub target_censoring: f64,
    pub method: BenchMethod,
    pub runs: usize,
    /// Mean wall-clock seconds over the runs.
    pub mean_seconds: f64,
    /// Selected covariates that are nonzero in `true_beta`, averaged over runs.
    pub true_positives: Option<f64>,
    pub false_positives: Option<f64>,
    pub error: Option<String>,
}

pub const BENCH_RUNS: usize = 3;

fn recovery(selected: &[usize], truth: &[f64]) -> (f64, f64) {
    let tp = selected.iter().filter(|&&j| truth[j] != 0.0).count();
    (tp as f64, (selected.len() - tp) as f64)
}

fn time_method(
    ds: &SurvivalDataset,
    truth: &[f64],
    method: BenchMethod,
    cfg: &MicConfig,
) -> Result<(f64, Option<(f64, f64)>)> {
    let clock = Instant::now();
    let selection = match method {
        BenchMethod::Mic => {
            let r = fit(ds, cfg)?;
            Some(r.support())
        }
        BenchMethod::Mple => {
            fit_mple(&ds.standardize()?, cfg.newton)?;
            None
        }
        BenchMethod::Stepwise => Some(stepwise_bic(&ds.standardize()?, cfg.newton)?.0),
    };
    let secs = clock.elapsed().as_secs_f64();
    Ok((secs, selection.map(|s| recovery(&s, truth))))
}

fn bench_cell(spec: &SimSpec, method: BenchMethod, cfg: &MicConfig) -> BenchRow {
    let mut row = BenchRow {
        n: spec.n,
        p: spec.p,
        target_censoring: spec.target_censoring,
        method,
        runs: 0,
        mean_seconds: f64::NAN,
        true_positives: None,
        false_positives: None,
        error: None,
    };
    let mut secs = 0.0;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut scored = false;
    for run in 0..BENCH_RUNS {
        let run_spec = SimSpec {
            seed: spec.seed.wrapping_add(run as u64),
            ..spec.clone()
        };
        let outcome = generate(&run_spec).and_then(|ds| time_method(&ds, &spec.true_beta, method, cfg));
        match outcome {
            Ok((s, rec)) => {
                secs += s;
                if let Some((t, f)) = rec {
                    tp += t;
                    fp += f;
                    scored = true;
                }
                row.runs += 1;
            }
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
    let runs = row.runs as f64;
    row.mean_seconds = secs / runs;
    if scored {
        row.true_positives = Some(tp / runs);
        row.false_positives = Some(fp / runs);
    }
    row
}

/// Times each method on each cell, averaging over [`BENCH_RUNS`] seeded
/// datasets per cell. Cells run one after another so timings do not compete
/// for cores; a failing cell is recorded and the grid continues.
pub fn bench_grid(grid: &[SimSpec], methods: &[BenchMethod], cfg: &MicConfig) -> Vec<BenchRow> {
    grid.iter()
        .flat_map(|spec| methods.iter().map(move |&m| bench_cell(spec, m, cfg)))
        .collect()
}

/// Table-1 style grid: n in {200, 2000}, p in {10, 50, 100}, censoring in
/// {25%, 40%}, with `true_beta = (1, 1, 0, ..., 0)`.
pub fn table1_grid(seed: u64) -> Vec<SimSpec> {
    let mut out = Vec::new();
    for n in [200, 2000] {
        for p in [10, 50, 100] {
            for c in [0.25, 0.40] {
                out.push(SimSpec::sparse(n, p, c, seed));
            }
        }
    }
    out
}

/// Runs `f` over seeds in parallel, preserving seed order.
pub fn replicate<T, F>(seeds: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    seeds.into_par_iter().map(f).collect()
}

pub fn write_bench_tsv<W: std::io::Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "n\tp\tcensoring\tmethod\truns\tmean_seconds\ttrue_positives\tfalse_positives\terror")?;
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.2}"));
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{:.2}\t{}\t{}\t{:.6}\t{}\t{}\t{}",
            r.n,
            r.p,
            r.target_censoring,
            r.method.name(),
            r.runs,
            r.mean_seconds,
            opt(r.true_positives),
            opt(r.false_positives),
            r.error.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_shape_and_censoring() {
        let spec = SimSpec::sparse(200, 10, 0.25, 1);
        let ds = generate(&spec).unwrap();
        assert_eq!((ds.n(), ds.p()), (200, 10));
        let cens = 1.0 - ds.n_events() as f64 / 200.0;
        assert!((cens - 0.25).abs() <= CENSORING_TOLERANCE);
        assert!(ds.time().iter().all(|&t| t > 0.0));
        assert_eq!(ds.names()[0], "x1");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SimSpec::sparse(50, 3, 0.4, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SimSpec::sparse(50, 3, 0.4, 9);
        s.true_beta.pop();
        assert!(generate(&s).is_err());
        let s = SimSpec::sparse(1, 3, 0.4, 9);
        assert!(generate(&s).is_err());
        let s = SimSpec::sparse(50, 3, 1.0, 9);
        assert!(generate(&s).is_err());
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        assert!(bench_grid(&[], &[BenchMethod::Mic], &MicConfig::default()).is_empty());
    }

    #[test]
    fn stepwise_finds_strong_signal() {
        let ds = generate(&SimSpec::sparse(400, 6, 0.25, 3)).unwrap();
        let (sel, _) = stepwise_bic(&ds.standardize().unwrap(), NewtonOptions::default()).unwrap();
        assert!(sel.contains(&0) && sel.contains(&1), "{sel:?}");
    }
}
