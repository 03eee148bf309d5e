//! Right-censored survival data: CSV ingestion, recoding, listwise deletion
//! and column standardization.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{MicError, Result};

const MISSING_TOKENS: [&str; 4] = ["", "NA", "NaN", "nan"];

/// Canonical in-memory survival dataset.
///
/// Immutable after construction. Row `k` is subject `k` in file order after
/// incomplete rows have been removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalDataset {
    time: Vec<f64>,
    status: Vec<u8>,
    #[serde(skip)]
    covariates: DMatrix<f64>,
    names: Vec<String>,
    standardized: bool,
    centers: Vec<f64>,
    scales: Vec<f64>,
}

impl SurvivalDataset {
    /// Builds an unstandardized dataset, validating times, status codes and
    /// shapes.
    pub fn new(
        time: Vec<f64>,
        status: Vec<u8>,
        covariates: DMatrix<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = time.len();
        if n == 0 {
            return Err(MicError::EmptyData);
        }
        if status.len() != n || covariates.nrows() != n {
            return Err(MicError::Validation(format!(
                "length mismatch: {} times, {} status values, {} covariate rows",
                n,
                status.len(),
                covariates.nrows()
            )));
        }
        if names.len() != covariates.ncols() {
            return Err(MicError::Validation(format!(
                "{} column names for {} covariate columns",
                names.len(),
                covariates.ncols()
            )));
        }
        for (i, &t) in time.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(MicError::Validation(format!(
                    "row {}: time must be positive and finite, got {t}",
                    i + 1
                )));
            }
        }
        if let Some(i) = status.iter().position(|&s| s > 1) {
            return Err(MicError::Validation(format!(
                "row {}: status must be 0 or 1, got {}",
                i + 1,
                status[i]
            )));
        }
        if !status.contains(&1) {
            return Err(MicError::Validation(
                "no events (status == 1) in the data".into(),
            ));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(MicError::Validation(
                "covariates contain non-finite values".into(),
            ));
        }
        let p = covariates.ncols();
        Ok(Self {
            time,
            status,
            covariates,
            names,
            standardized: false,
            centers: vec![0.0; p],
            scales: vec![1.0; p],
        })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    /// Number of observed events (status == 1).
    pub fn n_events(&self) -> usize {
        self.status.iter().map(|&s| s as usize).sum()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[u8] {
        &self.status
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Centers each column at its sample mean and divides by its sample
    /// standard deviation (n - 1 denominator).
    ///
    /// Standardizing an already standardized dataset composes the transforms,
    /// so `raw_covariates` still recovers the original values.
    pub fn standardize(&self) -> Result<Self> {
        let n = self.n();
        let mut out = self.clone();
        for j in 0..self.p() {
            let col = self.covariates.column(j);
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
                return Err(MicError::DegenerateColumn(self.names[j].clone()));
            }
            for i in 0..n {
                out.covariates[(i, j)] = (self.covariates[(i, j)] - mean) / sd;
            }
            // raw = (std * sd + mean) * s_old + c_old
            out.centers[j] = mean * self.scales[j] + self.centers[j];
            out.scales[j] = sd * self.scales[j];
        }
        out.standardized = true;
        Ok(out)
    }

    /// Covariates mapped back through the recorded affine transform.
    pub fn raw_covariates(&self) -> DMatrix<f64> {
        let mut raw = self.covariates.clone();
        for j in 0..self.p() {
            let (c, s) = (self.centers[j], self.scales[j]);
            raw.column_mut(j).apply(|v| *v = *v * s + c);
        }
        raw
    }

    /// Dataset restricted to the given covariate columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let covariates = self.covariates.select_columns(cols.iter());
        Self {
            time: self.time.clone(),
            status: self.status.clone(),
            covariates,
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            standardized: self.standardized,
            centers: cols.iter().map(|&j| self.centers[j]).collect(),
            scales: cols.iter().map(|&j| self.scales[j]).collect(),
        }
    }

    /// Writes `time,status,<names...>` with raw (unstandardized) covariates.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string(), "status".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        let raw = self.raw_covariates();
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", self.time[i]), self.status[i].to_string()];
            rec.extend((0..self.p()).map(|j| format!("{}", raw[(i, j)])));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A value map applied to one column before numeric conversion.
///
/// Textual form: `from:to,from:to,*:default`. Values with no entry and no
/// default are rejected. Missing values pass through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Recode {
    pub pairs: Vec<(String, String)>,
    pub default: Option<String>,
}

impl Recode {
    pub fn apply(&self, value: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(from, _)| from == value)
            .map(|(_, to)| to.as_str())
            .or(self.default.as_deref())
    }
}

impl FromStr for Recode {
    type Err = MicError;

    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut default = None;
        for item in s.split(',').filter(|t| !t.trim().is_empty()) {
            let (from, to) = item.split_once(':').ok_or_else(|| {
                MicError::Config(format!("recode entry `{item}` is not of the form from:to"))
            })?;
            let (from, to) = (from.trim(), to.trim());
            if from == "*" {
                default = Some(to.to_string());
            } else {
                pairs.push((from.to_string(), to.to_string()));
            }
        }
        if pairs.is_empty() && default.is_none() {
            return Err(MicError::Config(format!("empty recode map `{s}`")));
        }
        Ok(Self { pairs, default })
    }
}

/// A `column=map` recode instruction, e.g. `status=2:1,*:0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecodeRule {
    pub column: String,
    pub map: Recode,
}

impl FromStr for RecodeRule {
    type Err = MicError;

    fn from_str(s: &str) -> Result<Self> {
        let (column, map) = s.split_once('=').ok_or_else(|| {
            MicError::Config(format!("recode rule `{s}` is not of the form column=from:to,..."))
        })?;
        Ok(Self {
            column: column.trim().to_string(),
            map: map.parse()?,
        })
    }
}

/// Untyped table read from CSV, before column selection and conversion.
#[derive(Debug, Clone)]
pub struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            MicError::Config(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .map(|v| (!MISSING_TOKENS.contains(&v)).then(|| v.to_string()))
                    .collect(),
            );
        }
        Ok(Self { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn index_of(&self, col: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| MicError::Config(format!("column `{col}` not found in input")))
    }

    /// Replaces every non-missing value of `col` through `map`.
    pub fn recode_column(&mut self, col: &str, map: &Recode) -> Result<()> {
        let j = self.index_of(col)?;
        let mut unmapped = Vec::new();
        for row in &mut self.rows {
            if let Some(v) = row[j].as_deref() {
                match map.apply(v) {
                    Some(to) => row[j] = Some(to.to_string()),
                    None => {
                        if !unmapped.iter().any(|u: &String| u == v) {
                            unmapped.push(v.to_string());
                        }
                    }
                }
            }
        }
        if unmapped.is_empty() {
            Ok(())
        } else {
            Err(MicError::Validation(format!(
                "column `{col}`: unmapped value(s) {}",
                unmapped.join(", ")
            )))
        }
    }

    /// Selects time, status and covariate columns, removes rows with any
    /// missing value among them, and converts to numbers.
    pub fn into_dataset(
        self,
        time_col: &str,
        status_col: &str,
        drop_cols: &[String],
    ) -> Result<SurvivalDataset> {
        let ti = self.index_of(time_col)?;
        let si = self.index_of(status_col)?;
        for d in drop_cols {
            self.index_of(d)?;
        }
        let dropped: HashSet<&str> = drop_cols.iter().map(String::as_str).collect();
        let cov_idx: Vec<usize> = (0..self.headers.len())
            .filter(|&j| j != ti && j != si && !dropped.contains(self.headers[j].as_str()))
            .collect();
        let names: Vec<String> = cov_idx.iter().map(|&j| self.headers[j].clone()).collect();

        let used: Vec<usize> = [ti, si].into_iter().chain(cov_idx.iter().copied()).collect();
        let parse = |row: usize, j: usize, v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| {
                MicError::Validation(format!(
                    "row {}: column `{}` has non-numeric value `{v}`",
                    row + 1,
                    self.headers[j]
                ))
            })
        };

        let mut time = Vec::new();
        let mut status = Vec::new();
        let mut values = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            if used.iter().any(|&j| row[j].is_none()) {
                continue;
            }
            let t = parse(r, ti, row[ti].as_deref().unwrap())?;
            if !(t > 0.0) {
                return Err(MicError::Validation(format!(
                    "row {}: time must be positive, got {t}",
                    r + 1
                )));
            }
            let s = parse(r, si, row[si].as_deref().unwrap())?;
            let s = match s {
                0.0 => 0u8,
                1.0 => 1u8,
                v => {
                    return Err(MicError::Validation(format!(
                        "row {}: status must be 0 or 1 after recoding, got {v}",
                        r + 1
                    )))
                }
            };
            time.push(t);
            status.push(s);
            for &j in &cov_idx {
                values.push(parse(r, j, row[j].as_deref().unwrap())?);
            }
        }
        if time.is_empty() {
            return Err(MicError::EmptyData);
        }
        let covariates = DMatrix::from_row_slice(time.len(), cov_idx.len(), &values);
        SurvivalDataset::new(time, status, covariates, names)
    }
}

/// Reads a CSV file into an unstandardized dataset.
pub fn load_csv<P: AsRef<Path>>(
    path: P,
    time_col: &str,
    status_col: &str,
    drop_cols: &[String],
) -> Result<SurvivalDataset> {
    RawTable::from_path(path)?.into_dataset(time_col, status_col, drop_cols)
}

/// Reads a CSV file, applies recodes in order, then converts.
pub fn load_csv_with_recodes<P: AsRef<Path>>(
    path: P,
    time_col: &str,
    status_col: &str,
    drop_cols: &[String],
    recodes: &[RecodeRule],
) -> Result<SurvivalDataset> {
    let mut table = RawTable::from_path(path)?;
    for rule in recodes {
        table.recode_column(&rule.column, &rule.map)?;
    }
    table.into_dataset(time_col, status_col, drop_cols)
}
