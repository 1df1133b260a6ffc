//! Label enhancement datasets: features, logical labels and (optionally) the
//! ground-truth label distributions they were derived from.
//!
//! The on-disk format is header-free CSV, one sample per line:
//! `<name>_features.csv`, `<name>_logical.csv`, `<name>_distribution.csv`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row sums of a ground-truth distribution must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    None,
    #[default]
    Zscore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeDataset {
    pub name: String,
    pub features: Array2<f64>,
    /// 0/1 entries stored as floats so they feed straight into the label network.
    pub logical: Array2<f64>,
    pub ground_truth: Option<Array2<f64>>,
    pub feature_scaling: FeatureScaling,
    /// Rows whose logical labels were repaired during binarization.
    pub repaired_rows: Vec<usize>,
}

impl LeDataset {
    /// Validates the matrices and applies feature scaling.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        logical: Array2<f64>,
        ground_truth: Option<Array2<f64>>,
        scaling: FeatureScaling,
    ) -> Result<Self> {
        let name = name.into();
        let (n, dim1) = features.dim();
        let c = logical.ncols();
        if n == 0 || dim1 == 0 || c == 0 {
            return Err(Error::InvalidData {
                file: name,
                message: format!("empty dataset (n={n}, dim1={dim1}, c={c})"),
            });
        }
        if logical.nrows() != n {
            return Err(Error::InvalidData {
                file: name,
                message: format!(
                    "dimension mismatch: {n} feature rows but {} logical rows",
                    logical.nrows()
                ),
            });
        }
        if let Some((row, col)) = find_non_finite(&features) {
            return Err(Error::InvalidData {
                file: name,
                message: format!("non-finite feature at row {row}, column {col}"),
            });
        }
        validate_logical(&logical).map_err(|message| Error::InvalidData {
            file: name.clone(),
            message,
        })?;
        if let Some(gt) = &ground_truth {
            if gt.dim() != (n, c) {
                return Err(Error::InvalidData {
                    file: name,
                    message: format!(
                        "dimension mismatch: ground truth is {}x{}, expected {n}x{c}",
                        gt.nrows(),
                        gt.ncols()
                    ),
                });
            }
            validate_stochastic(gt).map_err(|message| Error::InvalidData {
                file: name.clone(),
                message,
            })?;
        }
        let mut features = features;
        if scaling == FeatureScaling::Zscore {
            zscore_in_place(&mut features);
        }
        Ok(Self {
            name,
            features,
            logical,
            ground_truth,
            feature_scaling: scaling,
            repaired_rows: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim1(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_labels(&self) -> usize {
        self.logical.ncols()
    }

    /// Rows `indices` in the given order. Scaling is not re-applied.
    pub fn subset(&self, indices: &[usize]) -> LeDataset {
        LeDataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            logical: self.logical.select(Axis(0), indices),
            ground_truth: self
                .ground_truth
                .as_ref()
                .map(|g| g.select(Axis(0), indices)),
            feature_scaling: self.feature_scaling,
            repaired_rows: Vec::new(),
        }
    }

    /// Writes the three canonical CSV files into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix_csv(
            &dir.join(format!("{}_features.csv", self.name)),
            &self.features,
        )?;
        write_matrix_csv(
            &dir.join(format!("{}_logical.csv", self.name)),
            &self.logical,
        )?;
        if let Some(gt) = &self.ground_truth {
            write_matrix_csv(&dir.join(format!("{}_distribution.csv", self.name)), gt)?;
        }
        Ok(())
    }
}

fn find_non_finite(m: &Array2<f64>) -> Option<(usize, usize)> {
    m.indexed_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(idx, _)| idx)
}

fn validate_logical(logical: &Array2<f64>) -> std::result::Result<(), String> {
    for (i, row) in logical.outer_iter().enumerate() {
        let mut ones = 0;
        for (j, &v) in row.iter().enumerate() {
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                return Err(format!(
                    "non-binary logical entry {v} at row {i}, column {j}"
                ));
            }
        }
        if ones == 0 {
            return Err(format!("row {i} has no relevant label"));
        }
        if ones == row.len() {
            return Err(format!("row {i} has no irrelevant label"));
        }
    }
    Ok(())
}

fn validate_stochastic(m: &Array2<f64>) -> std::result::Result<(), String> {
    for (i, row) in m.outer_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(format!(
                    "negative or non-finite degree {v} at row {i}, column {j}"
                ));
            }
        }
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(format!("row {i} sums to {sum}"));
        }
    }
    Ok(())
}

/// Standardizes every column to zero mean and unit (population) variance.
/// Constant columns become all zero.
pub fn zscore_in_place(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::InvalidData {
                    file: file_label,
                    message: format!("row {i} has {} columns, expected {c}", record.len()),
                })
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::InvalidData {
                file: file_label.clone(),
                message: format!("non-numeric cell {cell:?} at row {i}, column {j}"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::InvalidData {
        file: file_label,
        message: e.to_string(),
    })
}

/// Writes a header-free CSV using shortest round-trip decimal formatting.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in m.outer_iter() {
        let line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn dataset_name(path: &Path, suffix: &str) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_suffix(suffix).unwrap_or(&stem).to_string()
}

/// Loads a dataset whose logical labels are given explicitly.
pub fn load_dataset(
    features_path: &Path,
    labels_path: &Path,
    ground_truth_path: Option<&Path>,
    scaling: FeatureScaling,
) -> Result<LeDataset> {
    let features = read_matrix_csv(features_path)?;
    let logical = read_matrix_csv(labels_path)?;
    let gt = ground_truth_path.map(read_matrix_csv).transpose()?;
    if features.nrows() != logical.nrows() {
        return Err(Error::InvalidData {
            file: labels_path.display().to_string(),
            message: format!(
                "dimension mismatch: {} logical rows vs {} feature rows",
                logical.nrows(),
                features.nrows()
            ),
        });
    }
    LeDataset::new(
        dataset_name(features_path, "_features"),
        features,
        logical,
        gt,
        scaling,
    )
}

/// Loads features plus ground-truth distributions and derives logical labels.
pub fn load_from_distributions(
    features_path: &Path,
    ground_truth_path: &Path,
    policy: &BinarizationPolicy,
    scaling: FeatureScaling,
) -> Result<LeDataset> {
    policy.validate()?;
    let features = read_matrix_csv(features_path)?;
    let gt = read_matrix_csv(ground_truth_path)?;
    if features.nrows() != gt.nrows() {
        return Err(Error::InvalidData {
            file: ground_truth_path.display().to_string(),
            message: format!(
                "dimension mismatch: {} distribution rows vs {} feature rows",
                gt.nrows(),
                features.nrows()
            ),
        });
    }
    validate_stochastic(&gt).map_err(|message| Error::InvalidData {
        file: ground_truth_path.display().to_string(),
        message,
    })?;
    let (logical, repaired) = binarize_with_repairs(&gt, policy);
    let mut ds = LeDataset::new(
        dataset_name(features_path, "_features"),
        features,
        logical,
        Some(gt),
        scaling,
    )?;
    ds.repaired_rows = repaired;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinarizationMode {
    /// Relevant iff degree >= param / c.
    #[default]
    ThresholdOverUniform,
    /// The `param` largest degrees are relevant.
    TopK,
    /// Relevant iff degree >= param.
    AbsoluteThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinarizationPolicy {
    pub mode: BinarizationMode,
    pub param: f64,
    /// Always mark the largest degree relevant, even if it misses the cutoff.
    pub force_argmax_relevant: bool,
}

impl Default for BinarizationPolicy {
    fn default() -> Self {
        Self {
            mode: BinarizationMode::ThresholdOverUniform,
            param: 1.0,
            force_argmax_relevant: false,
        }
    }
}

impl BinarizationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.param > 0.0 && self.param.is_finite()) {
            return Err(Error::Config(format!(
                "binarization param must be positive, got {}",
                self.param
            )));
        }
        if self.mode == BinarizationMode::TopK && self.param.fract() != 0.0 {
            return Err(Error::Config(format!(
                "top_k param must be an integer, got {}",
                self.param
            )));
        }
        Ok(())
    }

    /// Checks the policy against a label count (top_k needs k < c).
    pub fn validate_for(&self, c: usize) -> Result<()> {
        self.validate()?;
        if self.mode == BinarizationMode::TopK && self.param as usize >= c {
            return Err(Error::Config(format!(
                "top_k param {} must be below the label count {c}",
                self.param
            )));
        }
        Ok(())
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn argmin(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = j;
        }
    }
    best
}

/// Derives logical labels from distributions; see [`binarize_with_repairs`].
pub fn binarize(distributions: &Array2<f64>, policy: &BinarizationPolicy) -> Array2<f64> {
    binarize_with_repairs(distributions, policy).0
}

/// Derives logical labels and reports which rows needed repair.
///
/// A row that would come out all-zero gets its argmax set; an all-one row gets
/// its argmin cleared. Ties go to the lowest index. A single-label row (c = 1)
/// cannot hold both a one and a zero and is left as `[1]`.
pub fn binarize_with_repairs(
    distributions: &Array2<f64>,
    policy: &BinarizationPolicy,
) -> (Array2<f64>, Vec<usize>) {
    let (n, c) = distributions.dim();
    let mut out = Array2::zeros((n, c));
    let mut repaired = Vec::new();
    for (i, row) in distributions.outer_iter().enumerate() {
        let mut labels = out.row_mut(i);
        match policy.mode {
            BinarizationMode::ThresholdOverUniform => {
                let cutoff = policy.param / c as f64;
                labels.zip_mut_with(&row, |l, &d| *l = if d >= cutoff { 1.0 } else { 0.0 });
            }
            BinarizationMode::AbsoluteThreshold => {
                labels.zip_mut_with(&row, |l, &d| *l = if d >= policy.param { 1.0 } else { 0.0 });
            }
            BinarizationMode::TopK => {
                let k = (policy.param as usize).min(c);
                let mut order: Vec<usize> = (0..c).collect();
                // stable sort keeps lower indices first among ties
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
                for &j in &order[..k] {
                    labels[j] = 1.0;
                }
            }
        }
        if policy.force_argmax_relevant {
            labels[argmax(row)] = 1.0;
        }
        let ones = labels.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 {
            labels[argmax(row)] = 1.0;
            repaired.push(i);
        } else if ones == c && c > 1 {
            labels[argmin(row)] = 0.0;
            repaired.push(i);
        }
    }
    (out, repaired)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn split_folds(dataset: &LeDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    split_indices(dataset.n(), k, seed)
}

/// Assigns a shuffled position `p` to fold `p mod k`, so fold sizes differ by at most one.
pub fn split_indices(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} out of range [2, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_FOLDS));
    let mut assignments = vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        assignments[idx] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

/// Synthetic LE data: ground truth is the softmax of a random linear map of
/// Gaussian features plus Gaussian logit noise; logical labels come from the
/// default binarization policy. Features are left unscaled.
pub fn synth_generate(n: usize, dim1: usize, c: usize, seed: u64, noise: f64) -> Result<LeDataset> {
    if n < 2 || dim1 < 2 || c < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic counts must be >= 2 (n={n}, dim1={dim1}, c={c})"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise must be >= 0, got {noise}"
        )));
    }
    let mut rng = rng::stream(seed, rng::STREAM_SYNTH);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let weight_scale = SYNTH_LOGIT_SCALE / (dim1 as f64).sqrt();
    let weights = Array2::from_shape_fn((dim1, c), |_| gauss(&mut rng) * weight_scale);
    let features = Array2::from_shape_fn((n, dim1), |_| gauss(&mut rng));
    let mut logits = features.dot(&weights);
    if noise > 0.0 {
        logits.mapv_inplace(|v| v + noise * gauss(&mut rng));
    }
    let gt = crate::diffnet::softmax_rows(&logits);
    let (logical, repaired) = binarize_with_repairs(&gt, &BinarizationPolicy::default());
    let mut ds = LeDataset::new(
        format!("synth-n{n}-d{dim1}-c{c}-s{seed}"),
        features,
        logical,
        Some(gt),
        FeatureScaling::None,
    )?;
    ds.repaired_rows = repaired;
    Ok(ds)
}

/// Standard deviation of the noiseless synthetic logits.
pub const SYNTH_LOGIT_SCALE: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn policy(mode: BinarizationMode, param: f64) -> BinarizationPolicy {
        BinarizationPolicy {
            mode,
            param,
            force_argmax_relevant: false,
        }
    }

    #[test]
    fn threshold_over_uniform_example() {
        let d = array![[0.6, 0.3, 0.1]];
        let l = binarize(&d, &policy(BinarizationMode::ThresholdOverUniform, 1.0));
        assert_eq!(l, array![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn uniform_row_is_repaired_at_lowest_argmin() {
        let d = array![[0.25, 0.25, 0.25, 0.25]];
        let p = policy(BinarizationMode::ThresholdOverUniform, 1.0);
        let (l, repaired) = binarize_with_repairs(&d, &p);
        assert_eq!(l, array![[0.0, 1.0, 1.0, 1.0]]);
        assert_eq!(repaired, vec![0]);
    }

    #[test]
    fn empty_row_is_repaired_at_lowest_argmax() {
        let d = array![[0.4, 0.4, 0.2]];
        let (l, repaired) =
            binarize_with_repairs(&d, &policy(BinarizationMode::AbsoluteThreshold, 0.5));
        assert_eq!(l, array![[1.0, 0.0, 0.0]]);
        assert_eq!(repaired, vec![0]);
    }

    #[test]
    fn top_k_example() {
        let d = array![[0.5, 0.3, 0.2]];
        let l = binarize(&d, &policy(BinarizationMode::TopK, 2.0));
        assert_eq!(l, array![[1.0, 1.0, 0.0]]);
    }

    #[test]
    fn absolute_threshold_and_forced_argmax() {
        let d = array![[0.4, 0.35, 0.25]];
        let l = binarize(&d, &policy(BinarizationMode::AbsoluteThreshold, 0.3));
        assert_eq!(l, array![[1.0, 1.0, 0.0]]);
        let p = BinarizationPolicy {
            mode: BinarizationMode::AbsoluteThreshold,
            param: 0.45,
            force_argmax_relevant: true,
        };
        let (l, repaired) = binarize_with_repairs(&d, &p);
        assert_eq!(l, array![[1.0, 0.0, 0.0]]);
        assert!(repaired.is_empty());
    }

    #[test]
    fn policy_validation() {
        assert!(policy(BinarizationMode::TopK, 0.0).validate().is_err());
        assert!(policy(BinarizationMode::TopK, 3.0).validate_for(3).is_err());
        assert!(policy(BinarizationMode::TopK, 2.0).validate_for(3).is_ok());
        assert!(policy(BinarizationMode::TopK, 1.5).validate().is_err());
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "one_features.csv", "1.5,2,3\n");
        let l = write(dir.path(), "one_logical.csv", "0,1\n");
        let ds = load_dataset(&f, &l, None, FeatureScaling::None).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.dim1(), 3);
        assert_eq!(ds.num_labels(), 2);
        assert_eq!(ds.name, "one");
    }

    #[test]
    fn load_rejects_unnormalized_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "x_features.csv", "1,2\n");
        let l = write(dir.path(), "x_logical.csv", "0,1\n");
        let g = write(dir.path(), "x_distribution.csv", "0.5,0.6\n");
        let err = load_dataset(&f, &l, Some(&g), FeatureScaling::None).unwrap_err();
        assert!(err.to_string().contains("row 0 sums to 1.1"), "{err}");
    }

    #[test]
    fn load_rejects_non_binary_and_degenerate_logical() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "x_features.csv", "1,2\n3,4\n");
        let l = write(dir.path(), "x_logical.csv", "0,1\n0.5,1\n");
        let err = load_dataset(&f, &l, None, FeatureScaling::None).unwrap_err();
        assert!(err.to_string().contains("row 1, column 0"), "{err}");

        let l = write(dir.path(), "y_logical.csv", "0,1\n1,1\n");
        let err = load_dataset(&f, &l, None, FeatureScaling::None).unwrap_err();
        assert!(
            err.to_string().contains("row 1 has no irrelevant label"),
            "{err}"
        );
    }

    #[test]
    fn load_rejects_row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "x_features.csv", "1,2\n3,4\n");
        let l = write(dir.path(), "x_logical.csv", "0,1\n");
        let err = load_dataset(&f, &l, None, FeatureScaling::None).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn load_rejects_non_numeric_cell() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "x_features.csv", "1,abc\n");
        let err = read_matrix_csv(&f).unwrap_err();
        assert!(err.to_string().contains("row 0, column 1"), "{err}");
    }

    #[test]
    fn load_from_distributions_binarizes() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "d_features.csv", "1,2\n3,4\n5,7\n");
        let g = write(
            dir.path(),
            "d_distribution.csv",
            "0.6,0.3,0.1\n0.2,0.5,0.3\n0.1,0.1,0.8\n",
        );
        let ds = load_from_distributions(
            &f,
            &g,
            &BinarizationPolicy::default(),
            FeatureScaling::Zscore,
        )
        .unwrap();
        assert_eq!(
            ds.logical,
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );
        assert!(ds.ground_truth.is_some());
    }

    #[test]
    fn zscore_columns_and_constant_column() {
        let x = array![
            [1.0, 5.0, 2.0],
            [2.0, 5.0, 4.0],
            [3.0, 5.0, 9.0],
            [10.0, 5.0, -1.0]
        ];
        let l = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let ds = LeDataset::new("z", x, l, None, FeatureScaling::Zscore).unwrap();
        for (j, col) in ds.features.axis_iter(Axis(1)).enumerate() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9);
            if j == 1 {
                assert!(col.iter().all(|&v| v == 0.0));
            } else {
                assert!((sd - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fold_examples() {
        let plan = split_indices(10, 10, 3).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 1));

        let plan = split_indices(2465, 10, 3).unwrap();
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().all(|&s| s == 246 || s == 247));
        assert_eq!(sizes.iter().filter(|&&s| s == 247).count(), 5);

        assert_eq!(
            split_indices(50, 5, 9).unwrap(),
            split_indices(50, 5, 9).unwrap()
        );
        assert_ne!(
            split_indices(50, 5, 9).unwrap().assignments,
            split_indices(50, 5, 10).unwrap().assignments
        );
        assert!(split_indices(5, 1, 0).is_err());
        assert!(split_indices(5, 6, 0).is_err());
    }

    #[test]
    fn synth_contract() {
        let ds = synth_generate(500, 20, 5, 7, 0.1).unwrap();
        assert_eq!(ds.n(), 500);
        let gt = ds.ground_truth.as_ref().unwrap();
        for row in gt.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
        let again = synth_generate(500, 20, 5, 7, 0.1).unwrap();
        assert_eq!(ds, again);
        assert!(synth_generate(1, 20, 5, 7, 0.1).is_err());
        assert!(synth_generate(10, 20, 5, 7, -0.1).is_err());
    }

    #[test]
    fn synth_without_noise_is_a_function_of_features() {
        let ds = synth_generate(200, 2, 3, 11, 0.0).unwrap();
        let gt = ds.ground_truth.unwrap();
        // recompute with the same map on a duplicated row: rows whose features
        // match must have matching distributions, so compare the map directly
        let mut rng = rng::stream(11, rng::STREAM_SYNTH);
        let scale = SYNTH_LOGIT_SCALE / 2f64.sqrt();
        let w = Array2::from_shape_fn((2, 3), |_| rng.sample::<f64, _>(StandardNormal) * scale);
        let logits = ds.features.dot(&w);
        let expected = crate::diffnet::softmax_rows(&logits);
        assert_eq!(gt, expected);
        let dup = array![[0.3, -1.2], [0.3, -1.2]].dot(&w);
        let p = crate::diffnet::softmax_rows(&dup);
        assert_eq!(p.row(0), p.row(1));
    }

    proptest! {
        #[test]
        fn binarize_always_mixed(
            raw in proptest::collection::vec(0.0f64..1.0, 2..12),
            theta in 0.1f64..3.0,
            mode in 0u8..3,
        ) {
            let c = raw.len();
            let sum: f64 = raw.iter().sum::<f64>() + 1e-9;
            let row: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / c as f64) / sum).collect();
            let d = Array2::from_shape_vec((1, c), row).unwrap();
            let p = match mode {
                0 => policy(BinarizationMode::ThresholdOverUniform, theta),
                1 => policy(BinarizationMode::TopK, ((theta as usize) % (c - 1)).max(1) as f64),
                _ => policy(BinarizationMode::AbsoluteThreshold, theta / c as f64),
            };
            let l = binarize(&d, &p);
            let ones = l.iter().filter(|&&v| v == 1.0).count();
            prop_assert!(ones >= 1 && ones < c);
        }

        #[test]
        fn folds_partition(n in 2usize..300, k_raw in 2usize..20, seed in any::<u64>()) {
            let k = k_raw.min(n);
            let plan = split_indices(n, k, seed).unwrap();
            let mut seen = vec![0; n];
            for f in 0..k {
                for i in plan.test_indices(f) {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
