//! A small feed-forward network with exact reverse-mode gradients.
//!
//! Hidden layers use LeakyReLU; the output head is either linear or a row-wise
//! softmax. Batches are row-major `b x dim` matrices.

use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Linear,
    Softmax,
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`leaky_relu`]; the positive branch is used at zero.
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn validate_architecture(layer_dims: &[usize], slope: f64) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two layer dims".to_string(),
        ));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer dims must be >= 1, got {layer_dims:?}"
        )));
    }
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "leaky relu slope must be in (0, 1), got {slope}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpCheckpoint", try_from = "MlpCheckpoint")]
pub struct Mlp {
    layer_dims: Vec<usize>,
    /// `weights[i]` is `layer_dims[i + 1] x layer_dims[i]`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    slope: f64,
    head: OutputHead,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer; `layer_inputs[0]` is the batch itself.
    pub layer_inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pub pre_activations: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: mlp
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(
        layer_dims: &[usize],
        slope: f64,
        head: OutputHead,
        rng: &mut R,
    ) -> Result<Self> {
        validate_architecture(layer_dims, slope)?;
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-limit..=limit)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            slope,
            head,
        })
    }

    /// A network with every parameter set to zero.
    pub fn zeros(layer_dims: &[usize], slope: f64, head: OutputHead) -> Result<Self> {
        validate_architecture(layer_dims, slope)?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights: layer_dims
                .windows(2)
                .map(|p| Array2::zeros((p[1], p[0])))
                .collect(),
            biases: layer_dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
            slope,
            head,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Per layer: weights row-major, then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape(
                "set_flat_params",
                self.num_params(),
                params.len(),
            ));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<ForwardTrace> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(
                "mlp forward input width",
                self.input_dim(),
                batch.ncols(),
            ));
        }
        let depth = self.weights.len();
        let mut layer_inputs = Vec::with_capacity(depth);
        let mut pre_activations = Vec::with_capacity(depth);
        let mut current = batch.to_owned();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let pre = current.dot(&w.t()) + b;
            layer_inputs.push(current);
            current = if i + 1 < depth {
                pre.mapv(|v| leaky_relu(v, self.slope))
            } else {
                match self.head {
                    OutputHead::Linear => pre.clone(),
                    OutputHead::Softmax => softmax_rows(&pre),
                }
            };
            pre_activations.push(pre);
        }
        Ok(ForwardTrace {
            layer_inputs,
            pre_activations,
            output: current,
        })
    }

    /// Convenience: the outputs of [`Mlp::forward`] only.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch)?.output)
    }

    /// Reverse pass. Returns parameter gradients and the gradient with respect
    /// to the batch that produced `trace`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_grad: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if output_grad.dim() != trace.output.dim() {
            return Err(Error::shape(
                "mlp backward output gradient",
                format!("{:?}", trace.output.dim()),
                format!("{:?}", output_grad.dim()),
            ));
        }
        let depth = self.weights.len();
        let mut delta = match self.head {
            OutputHead::Linear => output_grad.clone(),
            OutputHead::Softmax => {
                // dz = y * (g - <g, y>) row-wise
                let y = &trace.output;
                let inner = (output_grad * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                y * &(output_grad - &inner)
            }
        };
        let mut grads = Gradients::zeros_like(self);
        for layer in (0..depth).rev() {
            grads.weights[layer] = delta.t().dot(&trace.layer_inputs[layer]);
            grads.biases[layer] = delta.sum_axis(Axis(0));
            let mut input_grad = delta.dot(&self.weights[layer]);
            if layer > 0 {
                let slope = self.slope;
                Zip::from(&mut input_grad)
                    .and(&trace.pre_activations[layer - 1])
                    .for_each(|g, &z| *g *= leaky_relu_grad(z, slope));
            }
            delta = input_grad;
        }
        Ok((grads, delta))
    }

    /// Plain SGD: `p <- p - lr * g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        if grads.weights.len() != self.weights.len()
            || grads
                .weights
                .iter()
                .zip(&self.weights)
                .any(|(g, w)| g.dim() != w.dim())
        {
            return Err(Error::shape(
                "sgd_step gradients",
                format!("{:?}", self.layer_dims),
                "mismatched gradient shapes",
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                message: "non-finite gradient".to_string(),
            });
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// On-disk checkpoint layout: row-major parameter arrays per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_dims: Vec<usize>,
    pub slope: f64,
    pub output_head: OutputHead,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<Mlp> for MlpCheckpoint {
    fn from(m: Mlp) -> Self {
        Self {
            layer_dims: m.layer_dims,
            slope: m.slope,
            output_head: m.head,
            weights: m
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<MlpCheckpoint> for Mlp {
    type Error = String;

    fn try_from(c: MlpCheckpoint) -> std::result::Result<Self, String> {
        if c.layer_dims.len() < 2 || c.layer_dims.contains(&0) {
            return Err(format!("invalid layer dims {:?}", c.layer_dims));
        }
        let layers = c.layer_dims.len() - 1;
        if c.weights.len() != layers || c.biases.len() != layers {
            return Err(format!("expected {layers} weight and bias arrays"));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (i, (w, b)) in c.weights.into_iter().zip(c.biases).enumerate() {
            let (fan_in, fan_out) = (c.layer_dims[i], c.layer_dims[i + 1]);
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(format!("non-finite parameter in layer {i}"));
            }
            weights.push(
                Array2::from_shape_vec((fan_out, fan_in), w)
                    .map_err(|e| format!("layer {i} weights: {e}"))?,
            );
            if b.len() != fan_out {
                return Err(format!(
                    "layer {i} bias has length {}, expected {fan_out}",
                    b.len()
                ));
            }
            biases.push(Array1::from(b));
        }
        Ok(Mlp {
            layer_dims: c.layer_dims,
            weights,
            biases,
            slope: c.slope,
            head: c.output_head,
        })
    }
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central differences of `loss` around `params`, compared against `analytic`.
/// Returns the largest per-parameter relative error.
pub fn finite_difference_check<F>(params: &[f64], analytic: &[f64], h: f64, mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(params.len(), analytic.len());
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = loss(&probe);
        probe[i] = params[i] - h;
        let down = loss(&probe);
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Checks `backward` against central differences for a scalar loss of the
/// network outputs. `loss` returns the value and its gradient w.r.t. outputs.
pub fn grad_check<F>(mlp: &Mlp, loss: F, batch: &Array2<f64>, h: f64) -> Result<f64>
where
    F: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    let trace = mlp.forward(batch)?;
    let (_, out_grad) = loss(&trace.output);
    let (grads, _) = mlp.backward(&trace, &out_grad)?;
    let mut probe = mlp.clone();
    let mut failure = None;
    let err = finite_difference_check(&mlp.flat_params(), &grads.flatten(), h, |p| {
        probe.set_flat_params(p).expect("length checked");
        match probe.forward(batch) {
            Ok(t) => loss(&t.output).0,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(err),
    }
}
