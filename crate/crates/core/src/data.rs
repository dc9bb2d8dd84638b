//! Tabular datasets: CSV ingestion, train/test splitting, and the synthetic
//! generators used by the experiments.
//!
//! Features are kept on their raw scale. Tree splits are invariant to
//! per-feature affine rescaling, and the GP reference standardizes internally.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        Ok(Matrix { nrows, ncols, data })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Builds a matrix from equal-length rows. An empty slice yields a `0 x 0` matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.nrows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.ncols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            nrows: indices.len(),
            ncols: self.ncols,
            data,
        }
    }

    pub(crate) fn check_cols(&self, expected: usize) -> Result<()> {
        if self.ncols != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.ncols,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}

/// Response values. Class labels are `1..=n_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Regression(Vec<f64>),
    Classification {
        labels: Vec<usize>,
        n_classes: usize,
    },
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Regression(y) => y.len(),
            Target::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Target::Regression(_) => Task::Regression,
            Target::Classification { .. } => Task::Classification,
        }
    }

    pub fn as_regression(&self) -> Option<&[f64]> {
        match self {
            Target::Regression(y) => Some(y),
            Target::Classification { .. } => None,
        }
    }

    fn select(&self, indices: &[usize]) -> Target {
        match self {
            Target::Regression(y) => Target::Regression(indices.iter().map(|&i| y[i]).collect()),
            Target::Classification { labels, n_classes } => Target::Classification {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

/// A feature matrix with its response. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub target: Target,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Per-feature `(min, max)` over the rows of this dataset.
    pub feature_ranges: Vec<(f64, f64)>,
    /// Original class label strings; entry `k - 1` is the string for label `k`.
    pub class_labels: Vec<String>,
}

impl Dataset {
    /// Validates and builds a dataset. Classification labels must cover
    /// `1..=n_classes` with at least two classes.
    pub fn new(features: Matrix, target: Target, feature_names: Vec<String>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "dataset has no feature columns".into(),
            ));
        }
        if target.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: target.len(),
            });
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: features.ncols(),
                got: feature_names.len(),
            });
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                row: pos / features.ncols() + 1,
                column: feature_names[pos % features.ncols()].clone(),
            });
        }
        let class_labels = match &target {
            Target::Regression(y) => {
                if let Some(row) = y.iter().position(|v| !v.is_finite()) {
                    return Err(Error::MissingValue {
                        row: row + 1,
                        column: "target".into(),
                    });
                }
                Vec::new()
            }
            Target::Classification { labels, n_classes } => {
                if *n_classes < 2 {
                    return Err(Error::SingleClass);
                }
                let mut seen = vec![false; *n_classes];
                for &l in labels {
                    if l == 0 || l > *n_classes {
                        return Err(Error::InvalidConfig(format!(
                            "class label {l} outside 1..={n_classes}"
                        )));
                    }
                    seen[l - 1] = true;
                }
                if !seen.iter().all(|&s| s) {
                    return Err(Error::InvalidConfig(
                        "class labels are not contiguous".into(),
                    ));
                }
                (1..=*n_classes).map(|k| k.to_string()).collect()
            }
        };
        let feature_ranges = ranges(&features);
        Ok(Dataset {
            features,
            target,
            feature_names,
            target_name: "target".into(),
            feature_ranges,
            class_labels,
        })
    }

    pub fn with_target_name(mut self, name: impl Into<String>) -> Self {
        self.target_name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.target.task()
    }

    /// Rows at `indices`, in that order (repeats allowed). Class count and
    /// label strings are inherited, so a subset may lack some classes.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        let feature_ranges = if indices.is_empty() {
            self.feature_ranges.clone()
        } else {
            ranges(&features)
        };
        Dataset {
            features,
            target: self.target.select(indices),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            feature_ranges,
            class_labels: self.class_labels.clone(),
        }
    }

    /// Per-feature population standard deviation; zero-spread features get 1.
    pub fn feature_scales(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.n_features())
            .map(|j| {
                let col = self.features.column(j);
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Label mapping as a JSON object `{label_string: integer}`.
    pub fn label_map_json(&self) -> serde_json::Value {
        let map = self
            .class_labels
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), serde_json::Value::from(k + 1)))
            .collect();
        serde_json::Value::Object(map)
    }
}

fn ranges(features: &Matrix) -> Vec<(f64, f64)> {
    (0..features.ncols())
        .map(|j| {
            features
                .rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .collect()
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "?")
}

/// Reads a headered, comma-separated file. Every column other than
/// `target_column` must be numeric. Classification labels are mapped to
/// `1..=K` in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::UnknownColumn(target_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::InvalidConfig(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                return Err(Error::MissingValue {
                    row,
                    column: header[c].clone(),
                });
            }
            if c == target_idx {
                match task {
                    Task::Regression => y.push(parse_cell(cell, row, &header[c])?),
                    Task::Classification => raw_labels.push(cell.to_owned()),
                }
            } else {
                data.push(parse_cell(cell, row, &header[c])?);
            }
        }
    }
    let nrows = match task {
        Task::Regression => y.len(),
        Task::Classification => raw_labels.len(),
    };
    let features = Matrix::new(nrows, feature_names.len(), data)?;
    let (target, class_labels) = match task {
        Task::Regression => (Target::Regression(y), Vec::new()),
        Task::Classification => {
            let mut order: Vec<String> = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            let labels = raw_labels
                .into_iter()
                .map(|s| {
                    *index.entry(s.clone()).or_insert_with(|| {
                        order.push(s);
                        order.len()
                    })
                })
                .collect();
            if order.len() < 2 {
                return Err(Error::SingleClass);
            }
            (
                Target::Classification {
                    labels,
                    n_classes: order.len(),
                },
                order,
            )
        }
    };
    let mut ds = Dataset::new(features, target, feature_names)?.with_target_name(target_column);
    if task == Task::Classification {
        ds.class_labels = class_labels;
    }
    Ok(ds)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_owned(),
            value: cell.to_owned(),
        }),
    }
}

/// Writes the dataset with the target as the last column. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.target_name);
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.len() {
        let mut cells: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        cells.push(match &ds.target {
            Target::Regression(y) => y[i].to_string(),
            Target::Classification { labels, .. } => ds.class_labels[labels[i] - 1].clone(),
        });
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Fraction of rows assigned to the training half, and the shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction {train_fraction} not in (0, 1]"
            )));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }

    pub fn train_size(&self, n: usize) -> usize {
        // Guard against 0.7 * 10 = 7.000000000000001 rounding up.
        let raw = self.train_fraction * n as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
    }

    /// Sorted `(train, test)` row indices.
    pub fn indices(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::rng(self.seed));
        let n_train = self.train_size(n);
        let mut train = perm[..n_train].to_vec();
        let mut test = perm[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }
}

/// Partitions rows into `(train, test)`; the test half may be empty.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    let (train, test) = spec.indices(ds.len());
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Like [`split`] but errors when either half would be empty.
pub fn split_nonempty(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split(ds, spec)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} leaves an empty partition of {} rows",
            spec.train_fraction,
            ds.len()
        )));
    }
    Ok((train, test))
}

/// Noise-free response of the one-dimensional illustration:
/// `f(x) = 2 / (1 + exp(-3x))` on `[-2, 2]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmoothTruth;

impl SmoothTruth {
    pub const DOMAIN: (f64, f64) = (-2.0, 2.0);

    pub fn eval(&self, x: f64) -> f64 {
        2.0 / (1.0 + (-3.0 * x).exp())
    }
}

/// `n` points with `x ~ U[-2, 2]` and `y = f(x) + N(0, noise_sd^2)`.
pub fn synth_smooth_1d(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, SmoothTruth)> {
    if n < 2 {
        return Err(Error::InvalidConfig("synth_smooth_1d needs n >= 2".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidConfig(format!("invalid noise_sd {noise_sd}")));
    }
    let truth = SmoothTruth;
    let mut r = rng::rng(seed);
    let (lo, hi) = SmoothTruth::DOMAIN;
    let xs: Vec<f64> = (0..n).map(|_| r.random_range(lo..hi)).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(&mut r);
            truth.eval(x) + noise_sd * e
        })
        .collect();
    let ds = Dataset::new(
        Matrix::new(n, 1, xs)?,
        Target::Regression(ys),
        vec!["x".into()],
    )?
    .with_target_name("y");
    Ok((ds, truth))
}

/// Friedman's first benchmark: ten `U[0,1]` features, five of them active,
/// `y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + noise`.
pub fn synth_friedman1(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::EmptyDataset);
    }
    let mut r = rng::rng(seed);
    let noise =
        Normal::new(0.0, noise_sd.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut data = Vec::with_capacity(n * 10);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..10).map(|_| r.random::<f64>()).collect();
        let f = 10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
            + 20.0 * (x[2] - 0.5).powi(2)
            + 10.0 * x[3]
            + 5.0 * x[4];
        y.push(f + noise.sample(&mut r));
        data.extend(x);
    }
    let names = (1..=10).map(|i| format!("x{i}")).collect();
    Ok(
        Dataset::new(Matrix::new(n, 10, data)?, Target::Regression(y), names)?
            .with_target_name("y"),
    )
}

/// Synthetic anthropometric table with the shape of the classic body-fat
/// data: 252 rows, 13 numeric features, percent body fat as the response.
pub fn synth_bodyfat_like(seed: u64) -> Result<Dataset> {
    const N: usize = 252;
    let mut r = rng::rng(seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut r) };
    let mut data = Vec::with_capacity(N * 13);
    let mut y = Vec::with_capacity(N);
    for _ in 0..N {
        let age = (45.0 + 12.5 * z()).clamp(22.0, 81.0);
        let height = 70.0 + 2.6 * z();
        let fat_latent = z();
        let frame = z();
        let weight = 178.0 + 4.5 * (height - 70.0) + 18.0 * fat_latent + 10.0 * frame + 2.0 * z();
        let abdomen = 92.0 + 9.0 * fat_latent + 2.5 * frame + 0.05 * (age - 45.0) + 1.5 * z();
        let chest = 100.0 + 5.0 * fat_latent + 4.5 * frame + 1.5 * z();
        let hip = 99.0 + 5.0 * fat_latent + 3.0 * frame + 1.2 * z();
        let neck = 38.0 + 1.2 * fat_latent + 1.3 * frame + 0.6 * z();
        let thigh = 59.0 + 3.5 * fat_latent + 2.5 * frame + 1.5 * z();
        let knee = 38.5 + 1.0 * frame + 0.4 * fat_latent + 0.8 * z();
        let ankle = 23.0 + 0.8 * frame + 0.6 * z();
        let biceps = 32.0 + 1.5 * frame + 1.2 * fat_latent + 1.0 * z();
        let forearm = 28.7 + 1.2 * frame + 0.8 * z();
        let wrist = 18.2 + 0.6 * frame + 0.3 * z();
        let core = abdomen - 0.7 * wrist * 2.0 - 0.06 * weight;
        let fat = (0.8 * core - 38.0
            + 0.08 * (age - 45.0)
            + 0.004 * (abdomen - 92.0).powi(2)
            + 3.5 * z())
        .clamp(0.0, 47.5);
        data.extend([
            age, weight, height, neck, chest, abdomen, hip, thigh, knee, ankle, biceps, forearm,
            wrist,
        ]);
        y.push(fat);
    }
    let names = [
        "age", "weight", "height", "neck", "chest", "abdomen", "hip", "thigh", "knee", "ankle",
        "biceps", "forearm", "wrist",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    Ok(
        Dataset::new(Matrix::new(N, 13, data)?, Target::Regression(y), names)?
            .with_target_name("bodyfat"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_regression_csv() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
        let ds = load_csv(f.path(), "y", Task::Regression).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.features.row(1), &[4.0, 5.0]);
        assert_eq!(ds.target, Target::Regression(vec![3.0, 6.0, 9.0, 12.0]));
        assert_eq!(ds.feature_ranges, vec![(1.0, 10.0), (2.0, 11.0)]);
    }

    #[test]
    fn missing_cell_names_row_and_column() {
        let f = write_tmp("a,b,y\n1,2,3\n4,,6\n");
        let err = load_csv(f.path(), "y", Task::Regression).unwrap_err();
        match err {
            Error::MissingValue { row, column } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = write_tmp("a,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), "nope", Task::Regression),
            Err(Error::UnknownColumn(c)) if c == "nope"
        ));
        let f = write_tmp("a,y\nx,2\n");
        assert!(matches!(
            load_csv(f.path(), "y", Task::Regression),
            Err(Error::NonNumeric { .. })
        ));
        let f = write_tmp("a,y\n1,cat\n2,cat\n");
        assert!(matches!(
            load_csv(f.path(), "y", Task::Classification),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", "y", Task::Regression),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn labels_follow_first_appearance() {
        let f = write_tmp("a,y\n1,dog\n2,cat\n3,dog\n4,eel\n");
        let ds = load_csv(f.path(), "y", Task::Classification).unwrap();
        assert_eq!(
            ds.target,
            Target::Classification {
                labels: vec![1, 2, 1, 3],
                n_classes: 3
            }
        );
        assert_eq!(ds.class_labels, vec!["dog", "cat", "eel"]);
        assert_eq!(ds.label_map_json()["cat"], 2);
    }

    #[test]
    fn constant_feature_has_degenerate_range() {
        let f = write_tmp("a,b,y\n1,5,3\n2,5,6\n");
        let ds = load_csv(f.path(), "y", Task::Regression).unwrap();
        assert_eq!(ds.feature_ranges[1], (5.0, 5.0));
    }

    #[test]
    fn split_partitions_rows() {
        let ds = synth_friedman1(100, 1.0, 3).unwrap();
        let spec = SplitSpec::new(0.75, 7).unwrap();
        let (tr, te) = spec.indices(100);
        assert_eq!(tr.len(), 75);
        assert_eq!(te.len(), 25);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (a, b) = split(&ds, &spec).unwrap();
        assert_eq!((a.len(), b.len()), (75, 25));
        assert_eq!(split(&ds, &spec).unwrap().0, a);
    }

    #[test]
    fn full_fraction_leaves_empty_test() {
        let ds = synth_friedman1(10, 1.0, 3).unwrap();
        let spec = SplitSpec::new(1.0, 1).unwrap();
        let (a, b) = split(&ds, &spec).unwrap();
        assert_eq!(a.len(), 10);
        assert!(b.is_empty());
        assert!(split_nonempty(&ds, &spec).is_err());
        assert!(SplitSpec::new(0.0, 1).is_err());
        assert_eq!(SplitSpec::new(0.7, 0).unwrap().train_size(10), 7);
    }

    #[test]
    fn smooth_1d_noise_free_and_deterministic() {
        let (ds, truth) = synth_smooth_1d(50, 0.0, 4).unwrap();
        let y = ds.target.as_regression().unwrap();
        for (i, x) in ds.features.column(0).into_iter().enumerate() {
            assert_eq!(y[i], truth.eval(x));
            assert!((-2.0..=2.0).contains(&x));
        }
        assert_eq!(
            synth_smooth_1d(50, 0.3, 9).unwrap().0,
            synth_smooth_1d(50, 0.3, 9).unwrap().0
        );
    }

    #[test]
    fn smooth_1d_noise_level() {
        let (ds, truth) = synth_smooth_1d(200, 0.1, 1).unwrap();
        let y = ds.target.as_regression().unwrap();
        let resid: Vec<f64> = ds
            .features
            .column(0)
            .iter()
            .zip(y)
            .map(|(&x, &y)| y - truth.eval(x))
            .collect();
        let m = resid.iter().sum::<f64>() / 200.0;
        let sd = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!((sd - 0.1).abs() < 0.02, "sd = {sd}");
    }

    #[test]
    fn truth_is_strictly_increasing() {
        let t = SmoothTruth;
        let grid: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * 0.001).collect();
        assert!(grid.windows(2).all(|w| t.eval(w[1]) > t.eval(w[0])));
    }
}
