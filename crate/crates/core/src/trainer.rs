//! Mini-batch SGD over the full objective, with a windowed convergence rule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::LeDataset;
use crate::error::{Error, Result};
use crate::objective::{loss_gradients, ConleConfig, ConleModel, LossBreakdown};
use crate::rng;

/// `"full"` in config files; a number otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Fixed(usize),
    Full(FullBatch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullBatch {
    Full,
}

impl BatchSize {
    pub const FULL: BatchSize = BatchSize::Full(FullBatch::Full);

    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Fixed(b) => b.min(n),
            BatchSize::Full(_) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub conle: ConleConfig,
    /// Step size; small because the distance term is summed over the batch.
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: BatchSize,
    pub seed: u64,
    /// Relative change between consecutive window means that counts as converged.
    pub convergence_tol: f64,
    pub convergence_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            conle: ConleConfig::default(),
            lr: 5e-4,
            max_epochs: 500,
            batch_size: BatchSize::Fixed(256),
            seed: 0,
            convergence_tol: 1e-3,
            convergence_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.conle.validate()?;
        // lr = 0 is allowed: it freezes the parameters, which is useful for baselines
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".to_string()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config("convergence_tol must be > 0".to_string()));
        }
        if self.convergence_window < 2 {
            return Err(Error::Config("convergence_window must be >= 2".to_string()));
        }
        if let BatchSize::Fixed(b) = self.batch_size {
            if b == 0 {
                return Err(Error::Config("batch_size must be >= 1".to_string()));
            }
            if b < 2 && self.conle.variant.uses_contrastive() {
                return Err(Error::Config(
                    "the contrastive term needs batch_size >= 2".to_string(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Batch-averaged loss terms, one entry per epoch.
    pub loss_curve: Vec<LossBreakdown>,
    pub epochs_run: usize,
    pub converged: bool,
    pub wall_time: f64,
    pub config_echo: TrainConfig,
}

impl TrainReport {
    pub fn totals(&self) -> Vec<f64> {
        self.loss_curve.iter().map(|b| b.total).collect()
    }

    /// Writes `epoch,l_con,l_dis,l_thr,total`.
    pub fn write_loss_curve_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "epoch,l_con,l_dis,l_thr,total").map_err(io)?;
        for (epoch, b) in self.loss_curve.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                epoch + 1,
                b.l_con,
                b.l_dis,
                b.l_thr,
                b.total
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Means of consecutive non-overlapping windows, aligned to the end of the curve.
pub fn window_means(totals: &[f64], window: usize) -> Vec<f64> {
    let skip = totals.len() % window;
    totals[skip..]
        .chunks(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect()
}

/// True once the mean of the last `window` epochs differs from the mean of
/// the `window` epochs before it by less than `tol`, relatively.
pub fn convergence_reached(totals: &[f64], window: usize, tol: f64) -> bool {
    let n = totals.len();
    if window == 0 || n < 2 * window {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let current = mean(&totals[n - window..]);
    let previous = mean(&totals[n - 2 * window..n - window]);
    (previous - current).abs() / previous.abs().max(1e-12) < tol
}

/// Splits a shuffled order into batches. A trailing batch of one sample is
/// folded into the previous batch when the contrastive term needs pairs.
fn batches(order: &[usize], size: usize, need_pairs: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if need_pairs && out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let merged_len = out.last().unwrap().len() + 1;
        let start = order.len() - merged_len;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

fn mean_breakdown(parts: &[LossBreakdown]) -> LossBreakdown {
    let k = parts.len() as f64;
    let sum = |f: fn(&LossBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / k;
    LossBreakdown {
        l_con: sum(|b| b.l_con),
        l_dis: sum(|b| b.l_dis),
        l_thr: sum(|b| b.l_thr),
        l_att: sum(|b| b.l_att),
        total: sum(|b| b.total),
    }
}

/// Trains the three networks from scratch. Deterministic in `config.seed`.
pub fn train(dataset: &LeDataset, config: &TrainConfig) -> Result<(ConleModel, TrainReport)> {
    config.validate()?;
    let n = dataset.n();
    let need_pairs = config.conle.variant.uses_contrastive();
    if need_pairs && n < 2 {
        return Err(Error::InvalidArgument(
            "the contrastive term needs at least 2 samples".to_string(),
        ));
    }
    let started = Instant::now();
    let mut model = ConleModel::init(
        dataset.dim1(),
        dataset.num_labels(),
        &config.conle,
        config.seed,
    )?;
    let batch_size = config.batch_size.resolve(n);
    let mut loss_curve = Vec::new();
    let mut converged = false;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(
            config.seed,
            rng::STREAM_SHUFFLE_BASE + epoch as u64,
        ));
        let mut epoch_parts = Vec::new();
        for batch in batches(&order, batch_size, need_pairs) {
            let x: Array2<f64> = dataset.features.select(Axis(0), batch);
            let l: Array2<f64> = dataset.logical.select(Axis(0), batch);
            let outcome = loss_gradients(&model, &x, &l, &config.conle).map_err(|e| match e {
                Error::Diverged { message, .. } => Error::Diverged {
                    epoch: epoch + 1,
                    message,
                },
                other => other,
            })?;
            model
                .sgd_step(&outcome.grads, config.lr)
                .map_err(|e| match e {
                    Error::Diverged { message, .. } => Error::Diverged {
                        epoch: epoch + 1,
                        message,
                    },
                    other => other,
                })?;
            epoch_parts.push(outcome.breakdown);
        }
        loss_curve.push(mean_breakdown(&epoch_parts));
        let totals: Vec<f64> = loss_curve.iter().map(|b| b.total).collect();
        if convergence_reached(&totals, config.convergence_window, config.convergence_tol) {
            converged = true;
            break;
        }
    }

    let report = TrainReport {
        epochs_run: loss_curve.len(),
        loss_curve,
        converged,
        wall_time: started.elapsed().as_secs_f64(),
        config_echo: config.clone(),
    };
    Ok((model, report))
}

/// Recovered distributions for every sample of `dataset`, in row order.
pub fn recover_all(model: &ConleModel, dataset: &LeDataset) -> Result<Array2<f64>> {
    if model.f1.input_dim() != dataset.dim1() || model.f2.input_dim() != dataset.num_labels() {
        return Err(Error::shape(
            "recover_all dataset dims",
            format!("{}x{}", model.f1.input_dim(), model.f2.input_dim()),
            format!("{}x{}", dataset.dim1(), dataset.num_labels()),
        ));
    }
    model.recover(&dataset.features, &dataset.logical)
}
