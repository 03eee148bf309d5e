//! Coefficient paths over the tanh sharpness parameter `a`.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::SurvivalDataset;
use crate::error::{MicError, Result};
use crate::fit::{estimate, prepare, MicConfig};
use crate::mic::{beta_of, MicPenalty};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    /// Start each point from the previous point's gamma instead of the
    /// configured start. Forces a serial scan.
    pub warm_start: bool,
    pub parallel: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            warm_start: false,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub names: Vec<String>,
    pub a_grid: Vec<f64>,
    /// One row per grid point.
    pub beta: Vec<Vec<f64>>,
    pub support: Vec<Vec<bool>>,
    pub min_q: Vec<f64>,
    pub converged: Vec<bool>,
    pub errors: Vec<Option<String>>,
    /// The input grid was not in ascending order and has been sorted.
    pub reordered: bool,
}

struct PointFit {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    min_q: f64,
    converged: bool,
}

fn fit_point(
    work: &SurvivalDataset,
    beta0: &[f64],
    a: f64,
    cfg: &MicConfig,
) -> Result<PointFit> {
    let base = MicPenalty::for_dataset(work, cfg.criterion, None)?;
    let pen = MicPenalty::new(a, base.lambda0)?;
    let (gamma, min_q, report) = estimate(work, pen, beta0, cfg)?;
    Ok(PointFit {
        beta: beta_of(&gamma, a),
        gamma,
        min_q,
        converged: report.local.converged,
    })
}

/// Fits the model independently at each `a` in the grid with the same seed
/// and starting policy. Rows come back in ascending `a` regardless of input
/// order or completion order. Per-point failures are recorded and the scan
/// continues.
pub fn scan_a(
    ds: &SurvivalDataset,
    a_grid: &[f64],
    cfg: &MicConfig,
    opts: ScanOptions,
) -> Result<PathResult> {
    if a_grid.is_empty() {
        return Err(MicError::Config("empty grid of a values".into()));
    }
    if let Some(bad) = a_grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(MicError::Config(format!("grid value a = {bad} is not positive")));
    }
    let mut grid = a_grid.to_vec();
    let reordered = grid.windows(2).any(|w| w[0] > w[1]);
    grid.sort_by(f64::total_cmp);

    let work = prepare(ds, cfg)?;
    let beta0 = cfg.start.starting_beta(&work, cfg.newton)?;

    let points: Vec<Result<PointFit>> = if opts.warm_start {
        let mut start = beta0.clone();
        grid.iter()
            .map(|&a| {
                let r = fit_point(&work, &start, a, cfg);
                if let Ok(pf) = &r {
                    start = pf.gamma.clone();
                }
                r
            })
            .collect()
    } else if opts.parallel {
        grid.par_iter()
            .map(|&a| fit_point(&work, &beta0, a, cfg))
            .collect()
    } else {
        grid.iter()
            .map(|&a| fit_point(&work, &beta0, a, cfg))
            .collect()
    };

    let p = work.p();
    let mut out = PathResult {
        names: work.names().to_vec(),
        a_grid: grid,
        beta: Vec::new(),
        support: Vec::new(),
        min_q: Vec::new(),
        converged: Vec::new(),
        errors: Vec::new(),
        reordered,
    };
    for r in points {
        match r {
            Ok(pf) => {
                out.support.push(pf.beta.iter().map(|&b| b != 0.0).collect());
                out.beta.push(pf.beta);
                out.min_q.push(pf.min_q);
                out.converged.push(pf.converged);
                out.errors.push(None);
            }
            Err(e) => {
                out.beta.push(vec![f64::NAN; p]);
                out.support.push(vec![false; p]);
                out.min_q.push(f64::NAN);
                out.converged.push(false);
                out.errors.push(Some(e.to_string()));
            }
        }
    }
    Ok(out)
}

impl PathResult {
    /// Tab-separated `a` followed by one column per covariate, all values in
    /// 6-decimal fixed point.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "a")?;
        for n in &self.names {
            write!(w, "\t{n}")?;
        }
        writeln!(w)?;
        for (a, row) in self.a_grid.iter().zip(&self.beta) {
            write!(w, "{a:.6}")?;
            for b in row {
                write!(w, "\t{b:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub a_min: f64,
    pub points: usize,
    /// Most common support among the points considered.
    pub modal_support: Vec<String>,
    /// Fraction of considered points whose support equals the modal one.
    pub stability: f64,
    /// Per covariate, max minus min of beta over the considered points.
    pub ranges: Vec<f64>,
}

/// Support stability and coefficient ranges over grid points with `a >= a_min`.
pub fn path_flatness(path: &PathResult, a_min: f64) -> Result<FlatnessReport> {
    let rows: Vec<usize> = (0..path.a_grid.len())
        .filter(|&k| path.a_grid[k] >= a_min && path.errors[k].is_none())
        .collect();
    if rows.is_empty() {
        return Err(MicError::Config(format!(
            "no successful grid points with a >= {a_min}"
        )));
    }
    let mut counts: HashMap<&[bool], usize> = HashMap::new();
    for &k in &rows {
        *counts.entry(path.support[k].as_slice()).or_default() += 1;
    }
    // Ties go to the support seen first along the grid.
    let best = counts.values().copied().max().unwrap_or(0);
    let modal = rows
        .iter()
        .map(|&k| path.support[k].as_slice())
        .find(|s| counts[s] == best)
        .unwrap();
    let p = path.names.len();
    let ranges = (0..p)
        .map(|j| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                (lo.min(path.beta[k][j]), hi.max(path.beta[k][j]))
            });
            hi - lo
        })
        .collect();
    Ok(FlatnessReport {
        a_min,
        points: rows.len(),
        modal_support: (0..p)
            .filter(|&j| modal[j])
            .map(|j| path.names[j].clone())
            .collect(),
        stability: best as f64 / rows.len() as f64,
        ranges,
    })
}
