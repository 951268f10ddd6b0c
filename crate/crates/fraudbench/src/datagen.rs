//! Synthetic transaction data, CSV ingestion, class balancing, splitting, and
//! feature standardization.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::core::{LabeledDataset, LABEL_FRAUD, LABEL_GENUINE};
use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

/// Parameters of the cluster scenario generator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioSpec {
    pub n_features: usize,
    pub clusters_per_class: usize,
    /// Half-width of the hypercube the cluster centroids are drawn from.
    pub class_separation: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Two-class Gaussian cluster data. Each class gets `clusters_per_class`
/// centroids drawn uniformly from [-separation, separation]^d and isotropic
/// unit-variance points around them. Class 0 (genuine) receives ceil(n/2)
/// samples and class 1 (fraud) floor(n/2); within a class, samples are spread
/// equally over the clusters with the remainder going to the earliest ones.
pub fn generate_clusters(spec: &ScenarioSpec) -> Result<LabeledDataset> {
    if spec.n_features == 0 || spec.n_samples == 0 || spec.clusters_per_class == 0 {
        return Err(Error::Contract(format!(
            "scenario needs positive sizes, got {spec:?}"
        )));
    }
    if !(spec.class_separation.is_finite() && spec.class_separation >= 0.0) {
        return Err(Error::Contract(format!(
            "class separation {} must be finite and non-negative",
            spec.class_separation
        )));
    }
    let d = spec.n_features;
    let mut rng = Rng::new(spec.seed);
    let n_genuine = spec.n_samples - spec.n_samples / 2;
    let n_fraud = spec.n_samples / 2;

    let mut rows = Matrix::zeros(spec.n_samples, d);
    let mut labels = Vec::with_capacity(spec.n_samples);
    let mut row_idx = 0;
    for (label, n_class) in [(LABEL_GENUINE, n_genuine), (LABEL_FRAUD, n_fraud)] {
        let centroids: Vec<Vec<f64>> = (0..spec.clusters_per_class)
            .map(|_| {
                (0..d)
                    .map(|_| rng.uniform(-spec.class_separation, spec.class_separation))
                    .collect()
            })
            .collect();
        let base = n_class / spec.clusters_per_class;
        let remainder = n_class % spec.clusters_per_class;
        for (c, centroid) in centroids.iter().enumerate() {
            let count = base + usize::from(c < remainder);
            for _ in 0..count {
                let row = rows.row_mut(row_idx);
                for (v, m) in row.iter_mut().zip(centroid.iter()) {
                    *v = m + rng.normal();
                }
                labels.push(label);
                row_idx += 1;
            }
        }
    }
    let names = (0..d).map(|i| format!("f{i}")).collect();
    LabeledDataset::new(rows, labels, names)
}

/// Reads a labeled dataset from a UTF-8 CSV file with a header row. All
/// columns except the label column are parsed as f64 features; parse errors
/// name the row and column.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::Data(format!("{} is empty", path.display()))),
    };
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let label_idx = columns
        .iter()
        .position(|c| c == label_column)
        .ok_or_else(|| {
            Error::Data(format!(
                "label column \"{label_column}\" not found in header {columns:?}"
            ))
        })?;
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, c)| c.clone())
        .collect();

    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut n_rows = 0usize;
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // data rows are 1-based and the header is row 1
        let row_name = line_no + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Data(format!(
                "row {row_name}: {} cells, header has {}",
                cells.len(),
                columns.len()
            )));
        }
        for (i, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if i == label_idx {
                let label: u8 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {row_name}, column \"{}\": bad label \"{cell}\"",
                        columns[i]
                    ))
                })?;
                if label > 1 {
                    return Err(Error::Data(format!(
                        "row {row_name}, column \"{}\": label must be 0 or 1, got {label}",
                        columns[i]
                    )));
                }
                labels.push(label);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {row_name}, column \"{}\": bad number \"{cell}\"",
                        columns[i]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "row {row_name}, column \"{}\": non-finite value",
                        columns[i]
                    )));
                }
                data.push(v);
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    let rows = Matrix::from_vec(n_rows, feature_names.len(), data)?;
    LabeledDataset::new(rows, labels, feature_names)
}

/// Writes a dataset as CSV (features then the label column). f64 values use
/// the shortest representation that round-trips exactly.
pub fn write_csv(ds: &LabeledDataset, path: &Path, label_column: &str) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for name in &ds.feature_names {
        write!(w, "{name},")?;
    }
    writeln!(w, "{label_column}")?;
    for (row, label) in ds.rows.iter_rows().zip(ds.labels.iter()) {
        for v in row {
            write!(w, "{v},")?;
        }
        writeln!(w, "{label}")?;
    }
    w.flush()?;
    Ok(())
}

/// Undersamples the majority class uniformly without replacement so both
/// classes have equal counts, then shuffles the result.
pub fn balance(ds: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let genuine = ds.indices_of(LABEL_GENUINE);
    let fraud = ds.indices_of(LABEL_FRAUD);
    if genuine.is_empty() || fraud.is_empty() {
        return Err(Error::Contract(
            "balance needs at least one sample of each class".into(),
        ));
    }
    let keep = genuine.len().min(fraud.len());
    let mut rng = Rng::new(seed);
    let mut pick = |mut idx: Vec<usize>| -> Vec<usize> {
        if idx.len() > keep {
            let chosen = rng.sample_indices(idx.len(), keep);
            idx = chosen.into_iter().map(|i| idx[i]).collect();
        }
        idx
    };
    let mut indices = pick(genuine);
    indices.extend(pick(fraud));
    rng.shuffle(&mut indices);
    Ok(ds.subset(&indices))
}

/// Stratified train/test split: each class is shuffled and divided with the
/// same fraction, so class ratios are preserved within one sample.
pub fn split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Contract(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for label in [LABEL_GENUINE, LABEL_FRAUD] {
        let mut idx = ds.indices_of(label);
        if idx.is_empty() {
            continue;
        }
        rng.shuffle(&mut idx);
        let n_train = ((idx.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.clamp(1, idx.len().saturating_sub(1).max(1));
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Contract(format!(
            "split of {} rows at {train_fraction} leaves an empty side",
            ds.n_samples()
        )));
    }
    rng.shuffle(&mut train_idx);
    rng.shuffle(&mut test_idx);
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose training variance was zero; their std is forced to 1.
    pub degenerate: Vec<bool>,
}

impl ScalerStats {
    /// Fits mean and standard deviation per column. Zero-variance columns get
    /// std 1 and are flagged.
    pub fn fit(rows: &Matrix) -> Result<ScalerStats> {
        if rows.rows() == 0 {
            return Err(Error::Contract("scaler fit on an empty matrix".into()));
        }
        let (n, d) = (rows.rows(), rows.cols());
        let mut mean = vec![0.0; d];
        for row in rows.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut var = vec![0.0; d];
        for row in rows.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                let c = v - m;
                *s += c * c;
            }
        }
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        let mut std = vec![0.0; d];
        let mut degenerate = vec![false; d];
        for i in 0..d {
            let s = (var[i] / denom).sqrt();
            if s > 0.0 {
                std[i] = s;
            } else {
                std[i] = 1.0;
                degenerate[i] = true;
            }
        }
        Ok(ScalerStats { mean, std, degenerate })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn transform(&self, rows: &Matrix) -> Matrix {
        let mut out = rows.clone();
        for r in 0..out.rows() {
            let t = self.transform_row(rows.row(r));
            out.row_mut(r).copy_from_slice(&t);
        }
        out
    }

    /// Restricts the scaler to a subset of columns.
    pub fn select(&self, indices: &[usize]) -> ScalerStats {
        ScalerStats {
            mean: indices.iter().map(|&i| self.mean[i]).collect(),
            std: indices.iter().map(|&i| self.std[i]).collect(),
            degenerate: indices.iter().map(|&i| self.degenerate[i]).collect(),
        }
    }
}
