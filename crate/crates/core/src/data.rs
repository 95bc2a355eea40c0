//! Datasets: the sine benchmark generator, LIBSVM and CSV loaders,
//! per-feature standardization and seeded shuffling.
//!
//! LIBSVM files hold one sample per line, `label idx:value ...`, with
//! 1-based feature indices; absent indices are zero. Labels are mapped to
//! one-hot rows in ascending label order.
//!
//! CSV files have a header row and numeric cells; one designated column is
//! the regression target.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::stream;
use crate::numerics::{norm, Matrix};

/// Half-width of the sine benchmark input interval, `12π`.
pub const SINE_HALF_WIDTH: f64 = 12.0 * PI;
/// Points per split in the sine benchmark.
pub const SINE_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// Dense inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `m × d` raw inputs.
    pub x: Matrix,
    /// `m × c` targets; one-hot rows for classification.
    pub y: Matrix,
    pub split: Split,
    /// `max_i ‖x_i‖₂`.
    pub radius: f64,
    /// Class labels in one-hot column order, when classification.
    pub labels: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix, split: Split, labels: Option<Vec<f64>>) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::shape(
                "Dataset",
                format!("{} inputs but {} targets", x.rows(), y.rows()),
            ));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("Dataset"));
        }
        let radius = max_row_norm(&x);
        Ok(Dataset {
            x,
            y,
            split,
            radius,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn outputs(&self) -> usize {
        self.y.cols()
    }

    pub fn is_classification(&self) -> bool {
        self.labels.is_some()
    }

    /// Radius usable for gate sampling: `radius`, or 1 when every input is
    /// zero.
    pub fn sampling_radius(&self) -> f64 {
        if self.radius > 0.0 {
            self.radius
        } else {
            1.0
        }
    }

    /// Rows reordered by a permutation drawn from stream `("shuffle-data", 0)`.
    pub fn shuffled(&self, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream(seed, "shuffle-data", 0));
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            split: self.split,
            radius: self.radius,
            labels: self.labels.clone(),
        }
    }

    /// First `n_train` rows as training data, the rest as test data.
    pub fn split_at(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train > self.len() {
            return Err(Error::param(format!(
                "cannot take {n_train} training rows from {}",
                self.len()
            )));
        }
        let train: Vec<usize> = (0..n_train).collect();
        let test: Vec<usize> = (n_train..self.len()).collect();
        let mut a = self.select(&train);
        let mut b = self.select(&test);
        a.split = Split::Train;
        b.split = Split::Test;
        a.radius = max_row_norm(&a.x);
        b.radius = max_row_norm(&b.x);
        Ok((a, b))
    }
}

fn max_row_norm(x: &Matrix) -> f64 {
    (0..x.rows()).map(|i| norm(x.row(i))).fold(0.0, f64::max)
}

/// `m` points with `x ~ Uniform[-12π, 12π]` and `y = sin(x)`.
pub fn gen_sine(m: usize, seed: u64) -> Dataset {
    gen_sine_split(m, seed, Split::Train)
}

/// Like [`gen_sine`], drawing from a stream per split so that train and
/// test sets of one seed are independent.
pub fn gen_sine_split(m: usize, seed: u64, split: Split) -> Dataset {
    let label = match split {
        Split::Train => "sine-train",
        Split::Test => "sine-test",
    };
    let mut rng = stream(seed, label, 0);
    let xs: Vec<f64> = (0..m)
        .map(|_| rng.random_range(-SINE_HALF_WIDTH..=SINE_HALF_WIDTH))
        .collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let x = Matrix::new(m, 1, xs).expect("finite");
    let y = Matrix::new(m, 1, ys).expect("finite");
    Dataset::new(x, y, split, None).expect("consistent shapes")
}

/// Options for [`load_libsvm_with`].
#[derive(Debug, Clone, Default)]
pub struct LibsvmOptions {
    /// Feature count; defaults to the largest index seen.
    pub dim: Option<usize>,
    /// Label order for one-hot columns; defaults to sorted distinct labels.
    /// Pass the training labels when loading a test split.
    pub labels: Option<Vec<f64>>,
    pub split: Split,
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    load_libsvm_with(path, &LibsvmOptions::default())
}

pub fn load_libsvm_with(path: &Path, opts: &LibsvmOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(BufReader::new(file), opts)
}

/// Parses LIBSVM text from any reader.
pub fn parse_libsvm<R: BufRead>(reader: R, opts: &LibsvmOptions) -> Result<Dataset> {
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad label {label_tok:?}"),
        })?;
        let mut feats = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected idx:value, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad feature value {val:?}"),
            })?;
            if !val.is_finite() || !label.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "non-finite value".into(),
                });
            }
            max_index = max_index.max(idx);
            feats.push((idx, val));
        }
        rows.push((label, feats));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }
    let dim = opts.dim.unwrap_or(max_index);
    if max_index > dim {
        return Err(Error::param(format!(
            "feature index {max_index} exceeds dimension {dim}"
        )));
    }
    let labels = match &opts.labels {
        Some(l) => l.clone(),
        None => {
            let mut l: Vec<f64> = rows.iter().map(|r| r.0).collect();
            l.sort_by(f64::total_cmp);
            l.dedup();
            l
        }
    };
    let m = rows.len();
    let mut x = Matrix::zeros(m, dim);
    let mut y = Matrix::zeros(m, labels.len());
    for (i, (label, feats)) in rows.iter().enumerate() {
        for &(idx, val) in feats {
            x.set(i, idx - 1, val);
        }
        let class = labels.iter().position(|l| l == label).ok_or_else(|| {
            Error::param(format!("label {label} not in the known label set"))
        })?;
        y.set(i, class, 1.0);
    }
    Dataset::new(x, y, opts.split, Some(labels))
}

/// Reads a CSV with a header row; column `target_column` becomes the
/// single target and the rest are features, in file order.
pub fn load_csv(path: &Path, target_column: usize) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if target_column >= headers.len() {
        return Err(Error::param(format!(
            "target column {target_column} out of range for {} columns",
            headers.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut m = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("{} cells, header has {}", rec.len(), headers.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: "non-finite cell".into(),
                });
            }
            if j == target_column {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
        m += 1;
    }
    if m == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let d = headers.len() - 1;
    Dataset::new(Matrix::new(m, d, xs)?, Matrix::new(m, 1, ys)?, Split::Train, None)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes features `x1..xd` and single-column target `y` as CSV.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(ds)?)?;
    Ok(())
}

pub fn to_csv_string(ds: &Dataset) -> Result<String> {
    if ds.outputs() != 1 {
        return Err(Error::param("CSV export needs a single target column"));
    }
    let mut out = String::new();
    let mut header: Vec<String> = (1..=ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.len() {
        let mut cells: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        cells.push(ds.y.get(i, 0).to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    /// Per-feature zero mean and unit standard deviation.
    #[default]
    Standardize,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "standardize" | "std" => Ok(Normalization::Standardize),
            other => Err(Error::param(format!("unknown normalization {other:?}"))),
        }
    }
}

/// Per-feature shift and scale estimated on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Standard deviation, or 1 for constant features.
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn identity(d: usize) -> Self {
        NormStats {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn fit(x: &Matrix) -> Self {
        let (m, d) = x.shape();
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        if m == 0 {
            return NormStats { mean, scale };
        }
        for i in 0..m {
            for (mu, v) in mean.iter_mut().zip(x.row(i)) {
                *mu += v;
            }
        }
        for mu in &mut mean {
            *mu /= m as f64;
        }
        let mut var = vec![0.0; d];
        for i in 0..m {
            for ((s, v), mu) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        for (sc, v) in scale.iter_mut().zip(&var) {
            let sd = (v / m as f64).sqrt();
            if sd > 1e-12 {
                *sc = sd;
            }
        }
        NormStats { mean, scale }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::shape(
                "normalize",
                format!("{} features, stats for {}", ds.dim(), self.mean.len()),
            ));
        }
        let x = Matrix::from_fn(ds.len(), ds.dim(), |i, j| {
            (ds.x.get(i, j) - self.mean[j]) / self.scale[j]
        });
        Dataset::new(x, ds.y.clone(), ds.split, ds.labels.clone())
    }
}

/// Normalizes `train` (and `test`, when given) with statistics from
/// `train`. Radii are recomputed on the transformed data.
pub fn normalize(
    train: &Dataset,
    test: Option<&Dataset>,
    method: Normalization,
) -> Result<(Dataset, Option<Dataset>, NormStats)> {
    let stats = match method {
        Normalization::None => NormStats::identity(train.dim()),
        Normalization::Standardize => NormStats::fit(&train.x),
    };
    let tr = stats.apply(train)?;
    let te = test.map(|t| stats.apply(t)).transpose()?;
    Ok((tr, te, stats))
}
