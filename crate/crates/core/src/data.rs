//! Datasets: CSV ingestion, seeded splitting, standardization and the two
//! synthetic regression benchmarks.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    /// Binary classification with targets in `{0, 1}`.
    Classification,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
    pub task: TaskKind,
}

impl Dataset {
    /// Validates shapes, finiteness and target domain.
    pub fn new(
        x: Array2<f64>,
        y: Vec<f64>,
        feature_names: Option<Vec<String>>,
        task: TaskKind,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::Data(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i}, column {j}: non-finite value")));
            }
        }
        for (i, &t) in y.iter().enumerate() {
            check_target(task, t).map_err(|e| Error::Data(format!("row {i}: {e}")))?;
        }
        Ok(Dataset {
            x: x.as_standard_layout().into_owned(),
            y,
            feature_names,
            task,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Feature names, defaulting to `f1 … fp`.
    pub fn names(&self) -> Vec<String> {
        self.feature_names
            .clone()
            .unwrap_or_else(|| default_feature_names(self.p()))
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }
}

fn check_target(task: TaskKind, t: f64) -> std::result::Result<(), String> {
    if !t.is_finite() {
        return Err(format!("non-finite target {t}"));
    }
    if task == TaskKind::Classification && t != 0.0 && t != 1.0 {
        return Err(format!("classification target must be 0 or 1, got {t}"));
    }
    Ok(())
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("f{j}")).collect()
}

/// Which CSV column holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    /// All-digit strings are indices, anything else a column name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

/// Reads a comma-separated file with a header row. Every column other than
/// the target becomes a feature, in file order.
pub fn load_csv(path: &Path, target: &TargetColumn, task: TaskKind) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_col = match target {
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: no column named {name:?}", path.display())))?,
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Index(i) => {
            return Err(Error::Data(format!(
                "{}: target index {i} out of range for {} columns",
                path.display(),
                headers.len()
            )))
        }
    };
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_col)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len();

    let mut values = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column {:?}: {cell:?} is not a number",
                    path.display(),
                    row + 1,
                    headers[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {}, column {:?}: non-finite value",
                    path.display(),
                    row + 1,
                    headers[j]
                )));
            }
            if j == target_col {
                check_target(task, v).map_err(|e| {
                    Error::Data(format!("{}: row {}: {e}", path.display(), row + 1))
                })?;
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let x = Array2::from_shape_vec((y.len(), p), values)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Dataset::new(x, y, Some(names), task)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!();
    }
    let location = e
        .position()
        .map(|p| format!(" (line {})", p.line()))
        .unwrap_or_default();
    Error::Data(format!("{}{location}: {e}", path.display()))
}

/// Writes features then the target as the last column. Floats use Rust's
/// shortest round-trip formatting, so output is byte-stable.
pub fn write_csv(ds: &Dataset, path: &Path, target_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = ds.names();
    header.push(target_name.to_string());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut rec = Vec::with_capacity(ds.p() + 1);
    for (row, t) in ds.x.rows().into_iter().zip(&ds.y) {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(t.to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-column centering and scaling learned from a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Sample standard deviation (divisor `n − 1`); 1 for constant columns.
    pub std: Vec<f64>,
}

pub fn standardize_fit(x: &Array2<f64>) -> Result<StandardizationStats> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Data(format!(
            "standardization needs at least 2 training rows, got {n}"
        )));
    }
    let mut mean = Vec::with_capacity(x.ncols());
    let mut std = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let first = col[0];
        if col.iter().all(|v| *v == first) {
            mean.push(first);
            std.push(1.0);
            continue;
        }
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        mean.push(m);
        std.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    Ok(StandardizationStats { mean, std })
}

pub fn standardize_apply(x: &Array2<f64>, stats: &StandardizationStats) -> Result<Array2<f64>> {
    if x.ncols() != stats.mean.len() {
        return Err(Error::arg(format!(
            "matrix has {} columns, statistics cover {}",
            x.ncols(),
            stats.mean.len()
        )));
    }
    let mut out = x.as_standard_layout().into_owned();
    for mut row in out.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

/// Noise-free SE1 response `sin[(x₁ + x₃)²] · sin(x₆ x₇ x₈)` (1-based).
pub fn se1_response(x: &[f64]) -> f64 {
    let a = x[0] + x[2];
    (a * a).sin() * (x[5] * x[6] * x[7]).sin()
}

/// Noise-free SE2 response `log[(x₁₁ + … + x₁₅)²]` (1-based).
pub fn se2_response(x: &[f64]) -> f64 {
    let s: f64 = x[10..15].iter().sum();
    (s * s).ln()
}

pub const SE1_DIM: usize = 18;
pub const SE2_DIM: usize = 100;

/// SE1: 18 standard-normal covariates, 5 of which drive the response.
pub fn gen_se1(n: usize, seed: u64, sigma: f64) -> Result<Dataset> {
    synth(n, seed, sigma, SE1_DIM, se1_response, |_| true)
}

/// SE2: 100 standard-normal covariates, response depends on x₁₁…x₁₅. Rows
/// whose relevant sum is exactly zero are redrawn.
pub fn gen_se2(n: usize, seed: u64, sigma: f64) -> Result<Dataset> {
    synth(n, seed, sigma, SE2_DIM, se2_response, |x| {
        x[10..15].iter().sum::<f64>() != 0.0
    })
}

fn synth(
    n: usize,
    seed: u64,
    sigma: f64,
    p: usize,
    response: fn(&[f64]) -> f64,
    accept: fn(&[f64]) -> bool,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::arg("synthetic dataset needs n >= 1"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!("noise level must be >= 0, got {sigma}")));
    }
    let mut rng = rng::stream(seed, rng::STREAM_SYNTH);
    let mut x = Array2::zeros((n, p));
    let mut y = Vec::with_capacity(n);
    for mut row in x.rows_mut() {
        let row = row.as_slice_mut().expect("fresh array is contiguous");
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            if accept(row) {
                break;
            }
        }
        let eps: f64 = rng.sample(StandardNormal);
        y.push(response(row) + sigma * eps);
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Dataset::new(x, y, Some(names), TaskKind::Regression)
}

/// Seeded disjoint partition into train, validation and test parts of the
/// requested sizes. Rows left over are dropped.
pub fn split_threeway(
    ds: &Dataset,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = sizes;
    let total = a
        .checked_add(b)
        .and_then(|t| t.checked_add(c))
        .ok_or_else(|| Error::arg("split sizes overflow"))?;
    if total > ds.n() {
        return Err(Error::arg(format!(
            "split sizes ({a}, {b}, {c}) exceed {} rows",
            ds.n()
        )));
    }
    let mut perm: Vec<usize> = (0..ds.n()).collect();
    perm.shuffle(&mut rng::stream(seed, rng::STREAM_THREEWAY_SPLIT));
    Ok((
        ds.subset(&perm[..a]),
        ds.subset(&perm[a..a + b]),
        ds.subset(&perm[a + b..total]),
    ))
}
