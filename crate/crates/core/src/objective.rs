//! The contrastive label enhancement objective.
//!
//! Features and logical labels are projected by two networks into a shared
//! space (`Z`, `Q`). An instance-level contrastive loss pulls each sample's two
//! views together; the concatenation `H = [Z | Q]` feeds a third network with a
//! softmax head that emits the recovered label distributions. Those are tied
//! back to the logical labels by a squared distance term and a margin
//! (threshold) term.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::diffnet::{Gradients, Mlp, OutputHead};
use crate::error::{Error, Result};
use crate::rng;

/// Norms below this are clamped before dividing in cosine similarity.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Contrastive term plus distance and threshold terms.
    #[default]
    Full,
    /// No contrastive term: `lambda1 * l_dis + lambda2 * l_thr`.
    AblationH,
    /// No threshold term: `lambda1 * l_dis + l_con`.
    AblationL,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::AblationH, Variant::AblationL];

    pub fn uses_contrastive(self) -> bool {
        self != Variant::AblationH
    }

    pub fn uses_threshold(self) -> bool {
        self != Variant::AblationL
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "conle",
            Variant::AblationH => "conle_h",
            Variant::AblationL => "conle_l",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    /// One hinge per sample on (largest irrelevant degree, smallest relevant degree).
    #[default]
    WorstPair,
    /// One hinge per (relevant, irrelevant) label pair.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConleConfig {
    /// Instance-level contrastive temperature.
    pub tau: f64,
    /// Weight of the distance term.
    pub lambda1: f64,
    /// Weight of the threshold term.
    pub lambda2: f64,
    /// Margin between relevant and irrelevant degrees.
    pub epsilon: f64,
    /// Width of the shared projection space.
    pub dim2: usize,
    /// Hidden width of all three networks.
    pub hidden_dim: usize,
    pub leaky_slope: f64,
    pub variant: Variant,
    pub threshold_form: ThresholdForm,
    /// Adds the positive pair to the contrastive denominator (standard InfoNCE).
    pub include_positive_in_denominator: bool,
    /// Compare recoveries against `L / sum(L)` instead of the raw 0/1 vector.
    pub normalize_logical_target: bool,
}

impl Default for ConleConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            lambda1: 0.5,
            lambda2: 1.0,
            epsilon: 0.01,
            dim2: 64,
            hidden_dim: 64,
            leaky_slope: 0.01,
            variant: Variant::Full,
            threshold_form: ThresholdForm::WorstPair,
            include_positive_in_denominator: false,
            normalize_logical_target: false,
        }
    }
}

impl ConleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be >= 0, got {}", self.lambda1));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!("lambda2 must be >= 0, got {}", self.lambda2));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.dim2 == 0 || self.hidden_dim == 0 {
            return bad("dim2 and hidden_dim must be >= 1".to_string());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!(
                "leaky_slope must be in (0, 1), got {}",
                self.leaky_slope
            ));
        }
        Ok(())
    }
}

/// The three networks: feature projector, label projector, recovery network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConleModel {
    pub f1: Mlp,
    pub f2: Mlp,
    pub f3: Mlp,
}

impl ConleModel {
    /// `F1: dim1 -> hidden -> dim2`, `F2: c -> hidden -> dim2`,
    /// `F3: 2*dim2 -> hidden -> c` with a softmax head. Each network draws
    /// from its own stream of `seed`, so every variant starts identically.
    pub fn init(dim1: usize, c: usize, config: &ConleConfig, seed: u64) -> Result<Self> {
        let (h, d2, slope) = (config.hidden_dim, config.dim2, config.leaky_slope);
        Ok(Self {
            f1: Mlp::init(
                &[dim1, h, d2],
                slope,
                OutputHead::Linear,
                &mut rng::stream(seed, rng::STREAM_F1),
            )?,
            f2: Mlp::init(
                &[c, h, d2],
                slope,
                OutputHead::Linear,
                &mut rng::stream(seed, rng::STREAM_F2),
            )?,
            f3: Mlp::init(
                &[2 * d2, h, c],
                slope,
                OutputHead::Softmax,
                &mut rng::stream(seed, rng::STREAM_F3),
            )?,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.f3.output_dim()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.f1.flat_params();
        p.extend(self.f2.flat_params());
        p.extend(self.f3.flat_params());
        p
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let (n1, n2) = (self.f1.num_params(), self.f2.num_params());
        if params.len() != n1 + n2 + self.f3.num_params() {
            return Err(Error::shape(
                "model parameters",
                n1 + n2 + self.f3.num_params(),
                params.len(),
            ));
        }
        self.f1.set_flat_params(&params[..n1])?;
        self.f2.set_flat_params(&params[n1..n1 + n2])?;
        self.f3.set_flat_params(&params[n1 + n2..])
    }

    pub fn sgd_step(&mut self, grads: &ModelGradients, lr: f64) -> Result<()> {
        self.f1.sgd_step(&grads.f1, lr)?;
        self.f2.sgd_step(&grads.f2, lr)?;
        self.f3.sgd_step(&grads.f3, lr)
    }

    /// Recovered label distributions for a batch.
    pub fn recover(&self, features: &Array2<f64>, logical: &Array2<f64>) -> Result<Array2<f64>> {
        let emb = embed(&self.f1, &self.f2, features, logical)?;
        recover(&self.f3, &emb.h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub f1: Gradients,
    pub f2: Gradients,
    pub f3: Gradients,
}

impl ModelGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut g = self.f1.flatten();
        g.extend(self.f2.flatten());
        g.extend(self.f3.flatten());
        g
    }

    pub fn is_finite(&self) -> bool {
        self.f1.is_finite() && self.f2.is_finite() && self.f3.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub z: Array2<f64>,
    pub q: Array2<f64>,
    /// Row `m` is `z[m]` followed by `q[m]`.
    pub h: Array2<f64>,
}

pub fn embed(
    f1: &Mlp,
    f2: &Mlp,
    features: &Array2<f64>,
    logical: &Array2<f64>,
) -> Result<Embeddings> {
    if features.nrows() != logical.nrows() {
        return Err(Error::shape(
            "embed batch rows",
            features.nrows(),
            logical.nrows(),
        ));
    }
    if f1.output_dim() != f2.output_dim() {
        return Err(Error::shape(
            "embed projection widths",
            f1.output_dim(),
            f2.output_dim(),
        ));
    }
    let z = f1.predict(features)?;
    let q = f2.predict(logical)?;
    let h = concatenate(Axis(1), &[z.view(), q.view()]).expect("row counts checked");
    Ok(Embeddings { z, q, h })
}

pub fn cosine_sim(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine_sim length mismatch");
    let nu = u.dot(&u).sqrt().max(NORM_FLOOR);
    let nv = v.dot(&v).sqrt().max(NORM_FLOOR);
    u.dot(&v) / (nu * nv)
}

fn normalize_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(NORM_FLOOR));
    let unit = x / &norms.view().insert_axis(Axis(1));
    (unit, norms)
}

/// Pulls a gradient w.r.t. unit rows back to the raw rows.
fn unnormalize_grad(
    unit: &Array2<f64>,
    norms: &Array1<f64>,
    raw: &Array2<f64>,
    g_unit: &Array2<f64>,
) -> Array2<f64> {
    let mut out = g_unit.clone();
    for (m, mut row) in out.outer_iter_mut().enumerate() {
        let norm = norms[m];
        let raw_norm = raw.row(m).dot(&raw.row(m)).sqrt();
        if raw_norm < NORM_FLOOR {
            // clamped norm is constant in z
            row.mapv_inplace(|g| g / norm);
        } else {
            let u = unit.row(m);
            let proj = u.dot(&row);
            row.zip_mut_with(&u, |g, &ui| *g = (*g - ui * proj) / norm);
        }
    }
    out
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sums in ascending order so the result does not depend on sample order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn ordered_log_sum_exp(values: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(values);
    scratch.sort_by(f64::total_cmp);
    log_sum_exp(scratch)
}

/// Contrastive loss value and its gradients with respect to `z` and `q`.
///
/// For anchor `Z_m` the numerator is the positive pair `(Z_m, Q_m)`; the
/// denominator runs over every other sample `s != m`, pairing `Z_m` with both
/// `Z_s` and `Q_s`. The `Q_m` anchor is symmetric. Per-sample losses are summed
/// over both anchors and averaged over the batch.
pub fn contrastive_loss_and_grad(
    z: &Array2<f64>,
    q: &Array2<f64>,
    tau: f64,
    include_positive: bool,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let b = z.nrows();
    if z.dim() != q.dim() {
        return Err(Error::shape(
            "contrastive views",
            format!("{:?}", z.dim()),
            format!("{:?}", q.dim()),
        ));
    }
    if b < 2 {
        return Err(Error::InvalidArgument(format!(
            "contrastive loss needs a batch of at least 2, got {b}"
        )));
    }
    let (zu, zn) = normalize_rows(z);
    let (qu, qn) = normalize_rows(q);
    let s_zz = zu.dot(&zu.t());
    let s_qq = qu.dot(&qu.t());
    // s_zq[[m, s]] = h(Z_m, Q_s)
    let s_zq = zu.dot(&qu.t());

    let mut g_zz = Array2::<f64>::zeros((b, b));
    let mut g_qq = Array2::<f64>::zeros((b, b));
    let mut g_zq = Array2::<f64>::zeros((b, b));
    let scale = 1.0 / (tau * b as f64);
    let mut anchor_losses = Vec::with_capacity(2 * b);
    let mut logits = Vec::with_capacity(2 * b - 1);
    let mut scratch = Vec::with_capacity(2 * b - 1);

    for m in 0..b {
        let positive = s_zq[[m, m]] / tau;

        // anchor Z_m: same-view terms then cross-view terms, s != m
        logits.clear();
        logits.extend((0..b).filter(|&s| s != m).map(|s| s_zz[[m, s]] / tau));
        logits.extend((0..b).filter(|&s| s != m).map(|s| s_zq[[m, s]] / tau));
        if include_positive {
            logits.push(positive);
        }
        let lse = ordered_log_sum_exp(&logits, &mut scratch);
        anchor_losses.push(lse - positive);
        let mut k = 0;
        for s in (0..b).filter(|&s| s != m) {
            g_zz[[m, s]] += (logits[k] - lse).exp() * scale;
            k += 1;
        }
        for s in (0..b).filter(|&s| s != m) {
            g_zq[[m, s]] += (logits[k] - lse).exp() * scale;
            k += 1;
        }
        if include_positive {
            g_zq[[m, m]] += (logits[k] - lse).exp() * scale;
        }
        g_zq[[m, m]] -= scale;

        // anchor Q_m
        logits.clear();
        logits.extend((0..b).filter(|&s| s != m).map(|s| s_qq[[m, s]] / tau));
        logits.extend((0..b).filter(|&s| s != m).map(|s| s_zq[[s, m]] / tau));
        if include_positive {
            logits.push(positive);
        }
        let lse = ordered_log_sum_exp(&logits, &mut scratch);
        anchor_losses.push(lse - positive);
        let mut k = 0;
        for s in (0..b).filter(|&s| s != m) {
            g_qq[[m, s]] += (logits[k] - lse).exp() * scale;
            k += 1;
        }
        for s in (0..b).filter(|&s| s != m) {
            g_zq[[s, m]] += (logits[k] - lse).exp() * scale;
            k += 1;
        }
        if include_positive {
            g_zq[[m, m]] += (logits[k] - lse).exp() * scale;
        }
        g_zq[[m, m]] -= scale;
    }

    let g_zu = (&g_zz + &g_zz.t()).dot(&zu) + g_zq.dot(&qu);
    let g_qu = (&g_qq + &g_qq.t()).dot(&qu) + g_zq.t().dot(&zu);
    let dz = unnormalize_grad(&zu, &zn, z, &g_zu);
    let dq = unnormalize_grad(&qu, &qn, q, &g_qu);
    Ok((ordered_sum(&mut anchor_losses) / b as f64, dz, dq))
}

/// Contrastive loss value only (printed form: positive pair not in the denominator).
pub fn contrastive_loss(z: &Array2<f64>, q: &Array2<f64>, tau: f64) -> Result<f64> {
    contrastive_loss_and_grad(z, q, tau, false).map(|(v, _, _)| v)
}

/// Recovered distributions `F3(H)`; rows are softmax outputs.
pub fn recover(f3: &Mlp, h: &Array2<f64>) -> Result<Array2<f64>> {
    if f3.head() != OutputHead::Softmax {
        return Err(Error::InvalidArgument(
            "recovery network needs a softmax head".to_string(),
        ));
    }
    f3.predict(h)
}

fn check_same_shape(context: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            context,
            format!("{:?}", b.dim()),
            format!("{:?}", a.dim()),
        ));
    }
    Ok(())
}

/// Target used by the distance term: the raw logical vector or its normalization.
pub fn distance_target(logical: &Array2<f64>, normalize: bool) -> Array2<f64> {
    if !normalize {
        return logical.clone();
    }
    let sums = logical
        .sum_axis(Axis(1))
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    logical / &sums.insert_axis(Axis(1))
}

/// `sum_m ||D_m - L_m||^2`, summed (not averaged) over the batch.
pub fn distance_loss(recovered: &Array2<f64>, logical: &Array2<f64>) -> Result<f64> {
    distance_loss_and_grad(recovered, logical).map(|(v, _)| v)
}

pub fn distance_loss_and_grad(
    recovered: &Array2<f64>,
    logical: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    check_same_shape("distance loss", recovered, logical)?;
    let diff = recovered - logical;
    let value = diff.iter().map(|v| v * v).sum();
    Ok((value, diff * 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOutcome {
    pub value: f64,
    /// Gradient w.r.t. the recovered distributions (a subgradient at kinks).
    pub grad: Array2<f64>,
    /// Rows without both a relevant and an irrelevant label; they contribute 0.
    pub skipped_rows: usize,
}

pub fn threshold_loss(
    recovered: &Array2<f64>,
    logical: &Array2<f64>,
    epsilon: f64,
    form: ThresholdForm,
) -> Result<f64> {
    threshold_loss_and_grad(recovered, logical, epsilon, form).map(|o| o.value)
}

/// Margin hinge between relevant and irrelevant degrees, averaged over the batch.
/// Extremes resolve ties to the lowest label index; a hinge exactly at zero is
/// treated as inactive.
pub fn threshold_loss_and_grad(
    recovered: &Array2<f64>,
    logical: &Array2<f64>,
    epsilon: f64,
    form: ThresholdForm,
) -> Result<ThresholdOutcome> {
    check_same_shape("threshold loss", recovered, logical)?;
    let (b, c) = recovered.dim();
    let mut grad = Array2::zeros((b, c));
    let mut value = 0.0;
    let mut skipped_rows = 0;
    if b == 0 {
        return Ok(ThresholdOutcome {
            value,
            grad,
            skipped_rows,
        });
    }
    let inv_b = 1.0 / b as f64;
    for m in 0..b {
        let d = recovered.row(m);
        let l = logical.row(m);
        let relevant: Vec<usize> = (0..c).filter(|&j| l[j] > 0.5).collect();
        let irrelevant: Vec<usize> = (0..c).filter(|&j| l[j] <= 0.5).collect();
        if relevant.is_empty() || irrelevant.is_empty() {
            skipped_rows += 1;
            continue;
        }
        match form {
            ThresholdForm::WorstPair => {
                let mut neg = irrelevant[0];
                for &j in &irrelevant {
                    if d[j] > d[neg] {
                        neg = j;
                    }
                }
                let mut pos = relevant[0];
                for &j in &relevant {
                    if d[j] < d[pos] {
                        pos = j;
                    }
                }
                let hinge = d[neg] - d[pos] + epsilon;
                if hinge > 0.0 {
                    value += hinge * inv_b;
                    grad[[m, neg]] += inv_b;
                    grad[[m, pos]] -= inv_b;
                }
            }
            ThresholdForm::AllPairs => {
                for &pos in &relevant {
                    for &neg in &irrelevant {
                        let hinge = d[neg] - d[pos] + epsilon;
                        if hinge > 0.0 {
                            value += hinge * inv_b;
                            grad[[m, neg]] += inv_b;
                            grad[[m, pos]] -= inv_b;
                        }
                    }
                }
            }
        }
    }
    Ok(ThresholdOutcome {
        value,
        grad,
        skipped_rows,
    })
}

/// Per-term losses on one batch, combined according to the active variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub l_con: f64,
    pub l_dis: f64,
    pub l_thr: f64,
    pub l_att: f64,
    pub total: f64,
}

/// Raw component losses before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub l_con: f64,
    pub l_dis: f64,
    pub l_thr: f64,
}

/// Combines component losses. Terms a variant drops are recorded as 0, so
/// `l_att = lambda1 * l_dis + lambda2 * l_thr` and `total = l_con + l_att`
/// hold for every variant.
pub fn total_loss(parts: LossParts, config: &ConleConfig) -> LossBreakdown {
    let l_con = if config.variant.uses_contrastive() {
        parts.l_con
    } else {
        0.0
    };
    let l_thr = if config.variant.uses_threshold() {
        parts.l_thr
    } else {
        0.0
    };
    let l_dis = parts.l_dis;
    let l_att = config.lambda1 * l_dis + config.lambda2 * l_thr;
    LossBreakdown {
        l_con,
        l_dis,
        l_thr,
        l_att,
        total: l_con + l_att,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub breakdown: LossBreakdown,
    pub grads: ModelGradients,
    pub threshold_skipped_rows: usize,
}

/// Loss breakdown and exact gradients of the active objective for all three networks.
pub fn loss_gradients(
    model: &ConleModel,
    features: &Array2<f64>,
    logical: &Array2<f64>,
    config: &ConleConfig,
) -> Result<BatchOutcome> {
    let dim2 = model.f1.output_dim();
    let t1 = model.f1.forward(features)?;
    let t2 = model.f2.forward(logical)?;
    if t1.output.nrows() != t2.output.nrows() {
        return Err(Error::shape(
            "batch rows",
            t1.output.nrows(),
            t2.output.nrows(),
        ));
    }
    if model.f2.output_dim() != dim2 || model.f3.input_dim() != 2 * dim2 {
        return Err(Error::shape("model widths", 2 * dim2, model.f3.input_dim()));
    }
    let h = concatenate(Axis(1), &[t1.output.view(), t2.output.view()]).expect("rows checked");
    let t3 = model.f3.forward(&h)?;
    let recovered = &t3.output;

    let target = distance_target(logical, config.normalize_logical_target);
    let (l_dis, g_dis) = distance_loss_and_grad(recovered, &target)?;
    let thr = threshold_loss_and_grad(recovered, logical, config.epsilon, config.threshold_form)?;
    let (l_con, g_con) = if config.variant.uses_contrastive() {
        let (v, dz, dq) = contrastive_loss_and_grad(
            &t1.output,
            &t2.output,
            config.tau,
            config.include_positive_in_denominator,
        )?;
        (v, Some((dz, dq)))
    } else {
        (0.0, None)
    };
    let breakdown = total_loss(
        LossParts {
            l_con,
            l_dis,
            l_thr: thr.value,
        },
        config,
    );
    if !breakdown.total.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            message: format!("non-finite loss {breakdown:?}"),
        });
    }

    let mut g_recovered = g_dis * config.lambda1;
    if config.variant.uses_threshold() {
        g_recovered.scaled_add(config.lambda2, &thr.grad);
    }
    let (g3, g_h) = model.f3.backward(&t3, &g_recovered)?;
    let mut g_z = g_h.slice(s![.., ..dim2]).to_owned();
    let mut g_q = g_h.slice(s![.., dim2..]).to_owned();
    if let Some((dz, dq)) = g_con {
        g_z += &dz;
        g_q += &dq;
    }
    let (g1, _) = model.f1.backward(&t1, &g_z)?;
    let (g2, _) = model.f2.backward(&t2, &g_q)?;
    let grads = ModelGradients {
        f1: g1,
        f2: g2,
        f3: g3,
    };
    if !grads.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            message: "non-finite gradient".to_string(),
        });
    }
    Ok(BatchOutcome {
        breakdown,
        grads,
        threshold_skipped_rows: thr.skipped_rows,
    })
}

/// Total objective value only; used by finite-difference checks.
pub fn objective_value(
    model: &ConleModel,
    features: &Array2<f64>,
    logical: &Array2<f64>,
    config: &ConleConfig,
) -> Result<LossBreakdown> {
    let emb = embed(&model.f1, &model.f2, features, logical)?;
    let recovered = recover(&model.f3, &emb.h)?;
    let target = distance_target(logical, config.normalize_logical_target);
    let l_dis = distance_loss(&recovered, &target)?;
    let l_thr = threshold_loss(&recovered, logical, config.epsilon, config.threshold_form)?;
    let l_con = if config.variant.uses_contrastive() {
        contrastive_loss_and_grad(
            &emb.z,
            &emb.q,
            config.tau,
            config.include_positive_in_denominator,
        )?
        .0
    } else {
        0.0
    };
    Ok(total_loss(
        LossParts {
            l_con,
            l_dis,
            l_thr,
        },
        config,
    ))
}
