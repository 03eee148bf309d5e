use std::io::{self, Write};

use coxmic::inference::normal_critical_value;
use coxmic::path::FlatnessReport;
use coxmic::FitResult;

const COLUMNS: [&str; 7] = [
    "beta0",
    "gamma",
    "se.gamma",
    "z.stat",
    "p.value",
    "beta.MIC",
    "se.beta.MIC",
];

/// One row of rendered cells, `NA` where a value is undefined.
fn cells(r: &FitResult, j: usize, digits: usize) -> [String; 7] {
    let num = |v: f64| {
        // Avoid printing "-0.0000" for values that round to zero.
        let s = format!("{v:.digits$}");
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    };
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), num);
    let test = r.tests[j];
    [
        num(r.beta0[j]),
        num(r.gamma[j]),
        num(r.se_gamma[j]),
        opt(test.map(|t| t.z)),
        opt(test.map(|t| t.p_value)),
        num(r.beta[j]),
        opt(r.se_beta[j]),
    ]
}

/// Right-aligned columns with covariate names on the left.
pub fn table<W: Write>(r: &FitResult, digits: usize, w: &mut W) -> io::Result<()> {
    let rows: Vec<[String; 7]> = (0..r.names.len()).map(|j| cells(r, j, digits)).collect();
    let name_width = r.names.iter().map(|n| n.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..7)
        .map(|c| {
            rows.iter()
                .map(|row| row[c].len())
                .chain([COLUMNS[c].len()])
                .max()
                .unwrap()
        })
        .collect();
    write!(w, "{:name_width$}", "")?;
    for (c, h) in COLUMNS.iter().enumerate() {
        write!(w, " {:>width$}", h, width = widths[c])?;
    }
    writeln!(w)?;
    for (name, row) in r.names.iter().zip(&rows) {
        write!(w, "{name:<name_width$}")?;
        for (c, cell) in row.iter().enumerate() {
            write!(w, " {:>width$}", cell, width = widths[c])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn tsv<W: Write>(r: &FitResult, digits: usize, w: &mut W) -> io::Result<()> {
    writeln!(w, "name\t{}", COLUMNS.join("\t"))?;
    for (j, name) in r.names.iter().enumerate() {
        writeln!(w, "{name}\t{}", cells(r, j, digits).join("\t"))?;
    }
    Ok(())
}

pub fn details<W: Write>(r: &FitResult, w: &mut W) -> io::Result<()> {
    writeln!(w)?;
    writeln!(w, "n = {}, events = {}", r.n, r.n_events)?;
    writeln!(w, "a = {}, lambda0 = {:.6}", r.penalty.a, r.penalty.lambda0)?;
    writeln!(w, "min Q = {:.4}", r.min_q)?;
    writeln!(w, "BIC = {:.4}", r.bic)?;
    writeln!(w, "selected: {}", r.selected_names().join(", "))?;
    if r.vcov_pseudo_inverse {
        writeln!(w, "note: information matrix singular; pseudo-inverse used")?;
    }
    if r.vcov_clamped {
        writeln!(w, "note: negative variance estimates clamped to zero")?;
    }
    let rep = &r.report;
    for (label, s) in [("annealing", &rep.global), ("bfgs", &rep.local)] {
        writeln!(
            w,
            "{label}: iterations {}, evaluations {}, {:.4} -> {:.4}, converged {}, {:.3} s",
            s.iterations, s.evaluations, s.initial_value, s.final_value, s.converged, s.seconds
        )?;
    }
    writeln!(
        w,
        "best restart {}, coordinates snapped to zero {}",
        rep.restart, rep.snapped
    )
}

/// Rows of `parameter, name, estimate, lower, upper, selected` for error-bar
/// plots of gamma and beta.
pub fn plot_data<W: Write>(r: &FitResult, w: &mut W) -> io::Result<()> {
    let crit = normal_critical_value(r.config.conf_level).map_err(io::Error::other)?;
    writeln!(w, "parameter\tname\testimate\tlower\tupper\tselected")?;
    let bound = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    for (j, name) in r.names.iter().enumerate() {
        let sel = r.beta[j] != 0.0;
        let t = r.tests[j];
        writeln!(
            w,
            "gamma\t{name}\t{:.6}\t{}\t{}\t{}",
            r.gamma[j],
            bound(t.map(|t| t.ci_lower)),
            bound(t.map(|t| t.ci_upper)),
            u8::from(sel)
        )?;
    }
    for (j, name) in r.names.iter().enumerate() {
        let b = r.beta[j];
        let se = r.se_beta[j];
        writeln!(
            w,
            "beta\t{name}\t{b:.6}\t{}\t{}\t{}",
            bound(se.map(|s| b - crit * s)),
            bound(se.map(|s| b + crit * s)),
            u8::from(b != 0.0)
        )?;
    }
    Ok(())
}

pub fn flatness<W: Write>(f: &FlatnessReport, names: &[String], w: &mut W) -> io::Result<()> {
    writeln!(
        w,
        "flatness over {} grid points with a >= {}: modal support held by {:.1}%",
        f.points,
        f.a_min,
        100.0 * f.stability
    )?;
    writeln!(w, "modal support: {}", f.modal_support.join(", "))?;
    let ranges: Vec<String> = names
        .iter()
        .zip(&f.ranges)
        .filter(|(_, r)| **r > 0.0)
        .map(|(n, r)| format!("{n} {r:.4}"))
        .collect();
    writeln!(w, "coefficient ranges: {}", if ranges.is_empty() { "all zero".into() } else { ranges.join(", ") })
}
