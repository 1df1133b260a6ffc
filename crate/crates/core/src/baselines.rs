//! Reference recoveries used to sanity-check the learned method.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::LeDataset;
use crate::diffnet::softmax_rows;
use crate::error::{Error, Result};

/// Row-wise softmax of the 0/1 logical vector.
pub fn baseline_softmax(dataset: &LeDataset) -> Array2<f64> {
    softmax_rows(&dataset.logical)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelPropagationConfig {
    pub k_neighbors: usize,
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for LabelPropagationConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            alpha: 0.5,
            iterations: 100,
        }
    }
}

/// Fixed-point tolerance (max absolute change) for propagation.
const LP_TOL: f64 = 1e-8;

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r));
    let gram = x.dot(&x.t());
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0)
        }
    })
}

/// Row-normalized kNN graph with Gaussian affinities. Each sample's
/// neighborhood includes itself, so duplicated samples get identical rows;
/// the bandwidth is the mean squared distance over all kNN edges.
pub fn knn_transition(features: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = features.nrows();
    let d2 = squared_distances(features);
    let mut neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d2[[i, a]].total_cmp(&d2[[i, b]]).then(a.cmp(&b)));
        order.truncate(k + 1);
        neighbors.push(order);
    }
    let edges: Vec<f64> = neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| d2[[i, j]])
        .collect();
    let sigma2 = if edges.is_empty() {
        1.0
    } else {
        edges.iter().sum::<f64>() / edges.len() as f64
    };
    let mut p = Array2::zeros((n, n));
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            p[[i, j]] = if sigma2 > 0.0 {
                (-d2[[i, j]] / (2.0 * sigma2)).exp()
            } else {
                1.0
            };
        }
        let s: f64 = p.row(i).sum();
        p.row_mut(i).mapv_inplace(|v| v / s);
    }
    p
}

fn row_normalize(m: &Array2<f64>) -> Array2<f64> {
    let sums = m.sum_axis(Axis(1)).insert_axis(Axis(1));
    m / &sums
}

/// Iterates `F <- alpha * P F + (1 - alpha) * L` from `F = L`, then
/// normalizes rows into distributions.
pub fn baseline_lp(dataset: &LeDataset, config: &LabelPropagationConfig) -> Result<Array2<f64>> {
    let n = dataset.n();
    if config.k_neighbors == 0 || config.k_neighbors >= n {
        return Err(Error::InvalidArgument(format!(
            "k_neighbors must be in [1, {}), got {}",
            n, config.k_neighbors
        )));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1), got {}",
            config.alpha
        )));
    }
    let l = &dataset.logical;
    let p = knn_transition(&dataset.features, config.k_neighbors);
    let mut f = l.clone();
    for _ in 0..config.iterations {
        let next = p.dot(&f) * config.alpha + l * (1.0 - config.alpha);
        let change = (&next - &f).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        f = next;
        if change < LP_TOL {
            break;
        }
    }
    Ok(row_normalize(&f))
}
