//! Experiment harness behind the command-line tool: run configuration,
//! evaluation protocols, ablations, sweeps, gradient checks and rank reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{baseline_lp, baseline_softmax, LabelPropagationConfig};
use crate::dataset::{
    load_dataset, load_from_distributions, split_indices, synth_generate, write_matrix_csv,
    BinarizationPolicy, FeatureScaling, LeDataset,
};
use crate::diffnet::finite_difference_check;
use crate::error::{Error, Result};
use crate::metrics::{average_ranks, evaluate, Metric, MetricOptions, MetricReport, RankTable};
use crate::objective::{
    embed, loss_gradients, objective_value, ConleConfig, ConleModel, ThresholdForm, Variant,
};
use crate::rng;
use crate::trainer::{train, TrainConfig, TrainReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Header-free numeric CSVs. Logical labels are read from `logical` when
    /// given, otherwise derived from `distribution` with the binarization policy.
    Files {
        features: PathBuf,
        #[serde(default)]
        logical: Option<PathBuf>,
        #[serde(default)]
        distribution: Option<PathBuf>,
    },
    Synth {
        n: usize,
        dim1: usize,
        c: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalMode {
    /// Train and recover on the full dataset.
    #[default]
    Transductive,
    /// `repeats` independent `k`-fold splits; each fold trains on the other folds.
    Kfold { k: usize, repeats: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Conle,
    BaselineSoftmax,
    BaselineLp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub binarization: BinarizationPolicy,
    /// Applied to file datasets; synthetic features are already standard normal.
    #[serde(default)]
    pub scaling: FeatureScaling,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalMode,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub lp: LabelPropagationConfig,
    #[serde(default)]
    pub metrics: MetricOptions,
    /// Concurrent fold or sweep-point runs; 0 uses every core.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_workers() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn synthetic(n: usize, dim1: usize, c: usize, seed: u64, noise: f64) -> Self {
        Self::from_value(serde_json::json!({
            "dataset": {"kind": "synth", "n": n, "dim1": dim1, "c": c, "seed": seed, "noise": noise}
        }))
        .expect("static config")
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a JSON config and applies `path=value` overrides on top of it.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for (key, raw) in overrides {
            set_path(&mut value, key, raw)?;
        }
        let cfg = Self::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.binarization.validate()?;
        if let EvalMode::Kfold { k, repeats } = self.eval {
            if k < 2 || repeats == 0 {
                return Err(Error::Config(format!(
                    "kfold needs k >= 2 and repeats >= 1, got k={k} repeats={repeats}"
                )));
            }
        }
        if let DatasetSpec::Files {
            logical: None,
            distribution: None,
            ..
        } = self.dataset
        {
            return Err(Error::Config(
                "a file dataset needs `logical` or `distribution`".to_string(),
            ));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<LeDataset> {
        match &self.dataset {
            DatasetSpec::Synth {
                n,
                dim1,
                c,
                seed,
                noise,
            } => synth_generate(*n, *dim1, *c, *seed, *noise),
            DatasetSpec::Files {
                features,
                logical: Some(logical),
                distribution,
            } => load_dataset(features, logical, distribution.as_deref(), self.scaling),
            DatasetSpec::Files {
                features,
                logical: None,
                distribution: Some(dist),
            } => load_from_distributions(features, dist, &self.binarization, self.scaling),
            DatasetSpec::Files { .. } => Err(Error::Config(
                "a file dataset needs `logical` or `distribution`".to_string(),
            )),
        }
    }

    pub fn method_label(&self) -> String {
        match self.method {
            Method::Conle => self.train.conle.variant.label().to_string(),
            Method::BaselineSoftmax => "baseline_softmax".to_string(),
            Method::BaselineLp => "baseline_lp".to_string(),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))
    }
}

/// Sets a dotted `path` inside a JSON document. The value is parsed as JSON
/// when possible and kept as a string otherwise.
pub fn set_path(doc: &mut Value, path: &str, raw: &str) -> Result<()> {
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad config path `{path}`")));
    }
    for key in &keys[..keys.len() - 1] {
        if !cur.is_object() {
            return Err(Error::Config(format!(
                "`{path}`: `{key}` is not inside an object"
            )));
        }
        cur = cur
            .as_object_mut()
            .unwrap()
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match cur.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(Error::Config(format!(
            "`{path}` does not name an object field"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub n_test: usize,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub tool_version: String,
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub eval_mode: EvalMode,
    pub folds: Vec<FoldResult>,
    /// Unweighted mean of the per-fold reports.
    pub aggregate: MetricReport,
    pub train_reports: Vec<TrainReport>,
    pub repaired_rows: Vec<usize>,
    pub config: RunConfig,
}

impl ExperimentRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidData {
            file: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Everything one run produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ExperimentRecord,
    /// Transductive recoveries, or out-of-fold recoveries from the first repeat.
    pub recovered: Array2<f64>,
    /// Trained model of a transductive ConLE run.
    pub model: Option<ConleModel>,
}

struct FoldJob {
    repeat: usize,
    fold: usize,
    seed: u64,
    train: Vec<usize>,
    test: Vec<usize>,
}

struct FoldOutcome {
    recovered: Array2<f64>,
    report: MetricReport,
    train_report: Option<TrainReport>,
    model: Option<ConleModel>,
}

fn run_fold(
    cfg: &RunConfig,
    ds: &LeDataset,
    gt: &Array2<f64>,
    lp_all: Option<&Array2<f64>>,
    job: &FoldJob,
) -> Result<FoldOutcome> {
    let test = ds.subset(&job.test);
    let (recovered, train_report, model) = match cfg.method {
        Method::Conle => {
            let train_cfg = TrainConfig {
                seed: job.seed,
                ..cfg.train.clone()
            };
            let (model, report) = train(&ds.subset(&job.train), &train_cfg)?;
            // recovery takes the held-out rows' own logical labels as input
            let rec = model.recover(&test.features, &test.logical)?;
            (rec, Some(report), Some(model))
        }
        Method::BaselineSoftmax => (baseline_softmax(&test), None, None),
        Method::BaselineLp => (
            lp_all.expect("computed for lp").select(Axis(0), &job.test),
            None,
            None,
        ),
    };
    let report = evaluate(&recovered, &gt.select(Axis(0), &job.test), cfg.metrics)?;
    Ok(FoldOutcome {
        recovered,
        report,
        train_report,
        model,
    })
}

fn plan_jobs(cfg: &RunConfig, n: usize) -> Result<Vec<FoldJob>> {
    match cfg.eval {
        EvalMode::Transductive => Ok(vec![FoldJob {
            repeat: 0,
            fold: 0,
            seed: cfg.train.seed,
            train: (0..n).collect(),
            test: (0..n).collect(),
        }]),
        EvalMode::Kfold { k, repeats } => {
            let mut jobs = Vec::with_capacity(k * repeats);
            for repeat in 0..repeats {
                let repeat_seed = rng::derive_seed(cfg.train.seed, repeat as u64);
                let plan = split_indices(n, k, repeat_seed)?;
                for fold in 0..k {
                    jobs.push(FoldJob {
                        repeat,
                        fold,
                        seed: rng::derive_seed(repeat_seed, fold as u64),
                        train: plan.train_indices(fold),
                        test: plan.test_indices(fold),
                    });
                }
            }
            Ok(jobs)
        }
    }
}

/// Runs the configured method under the configured protocol on a loaded dataset.
/// Folds run in parallel on the current rayon pool; results keep fold order.
pub fn run_on(cfg: &RunConfig, ds: &LeDataset) -> Result<RunOutput> {
    cfg.validate()?;
    let gt = ds.ground_truth.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "dataset {} has no ground-truth distributions to evaluate against",
            ds.name
        ))
    })?;
    let lp_all = match cfg.method {
        Method::BaselineLp => Some(baseline_lp(ds, &cfg.lp)?),
        _ => None,
    };
    let jobs = plan_jobs(cfg, ds.n())?;
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|job| run_fold(cfg, ds, gt, lp_all.as_ref(), job))
        .collect::<Result<_>>()?;

    let mut recovered = Array2::zeros((ds.n(), ds.num_labels()));
    for (job, out) in jobs.iter().zip(&outcomes) {
        if job.repeat == 0 {
            for (row, &i) in job.test.iter().enumerate() {
                recovered.row_mut(i).assign(&out.recovered.row(row));
            }
        }
    }
    let folds: Vec<FoldResult> = jobs
        .iter()
        .zip(&outcomes)
        .map(|(job, out)| FoldResult {
            repeat: job.repeat,
            fold: job.fold,
            seed: job.seed,
            n_test: job.test.len(),
            metrics: out.report,
        })
        .collect();
    let reports: Vec<MetricReport> = folds.iter().map(|f| f.metrics).collect();
    let model = match cfg.eval {
        EvalMode::Transductive => outcomes.first().and_then(|o| o.model.clone()),
        EvalMode::Kfold { .. } => None,
    };
    let record = ExperimentRecord {
        tool_version: TOOL_VERSION.to_string(),
        method: cfg.method_label(),
        dataset: ds.name.clone(),
        seed: cfg.train.seed,
        eval_mode: cfg.eval,
        aggregate: MetricReport::mean(&reports),
        folds,
        train_reports: outcomes
            .into_iter()
            .filter_map(|o| o.train_report)
            .collect(),
        repaired_rows: ds.repaired_rows.clone(),
        config: cfg.clone(),
    };
    Ok(RunOutput {
        record,
        recovered,
        model,
    })
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let ds = cfg.load_dataset()?;
    cfg.pool()?.install(|| run_on(cfg, &ds))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `record.json`, `recovered.csv`, and for ConLE runs `loss_curve.csv`
/// (first fold) and `model.json` (transductive only).
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join("record.json"), &out.record.to_json()?)?;
    write_matrix_csv(&dir.join("recovered.csv"), &out.recovered)?;
    if let Some(report) = out.record.train_reports.first() {
        report.write_loss_curve_csv(&dir.join("loss_curve.csv"))?;
    }
    if let Some(model) = &out.model {
        write_text(&dir.join("model.json"), &serde_json::to_string(model)?)?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<ExperimentRecord> {
    let out = run(cfg)?;
    write_run(&out, &cfg.out)?;
    Ok(out.record)
}

fn metric_header() -> String {
    Metric::ALL
        .iter()
        .map(|m| {
            let arrow = match m.direction() {
                crate::metrics::Direction::LowerBetter => "(-)",
                crate::metrics::Direction::HigherBetter => "(+)",
            };
            format!("{} {arrow}", m.name())
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Methods as rows, the six measures as columns.
pub fn comparison_table(dataset: &str, records: &[ExperimentRecord]) -> String {
    let name_w = records
        .iter()
        .map(|r| r.method.len())
        .chain([dataset.len(), "Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!("{dataset}\n{:<name_w$} | {}\n", "Method", metric_header());
    for r in records {
        out.push_str(&format!("{:<name_w$}", r.method));
        for m in Metric::ALL {
            let w = m.name().len() + 4;
            out.push_str(&format!(" | {:>w$.4}", r.aggregate.get(m)));
        }
        out.push('\n');
    }
    out
}

/// Runs the full objective and both ablations with shared seeds, writing each
/// run into `<out>/<variant>` and the comparison into `<out>/table.txt`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<ExperimentRecord>> {
    if cfg.method != Method::Conle {
        return Err(Error::Config("ablate needs method = conle".to_string()));
    }
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let pool = cfg.pool()?;
    // ablations first, matching the usual table layout
    let order = [Variant::AblationH, Variant::AblationL, Variant::Full];
    let outputs: Vec<RunOutput> = pool.install(|| {
        order
            .par_iter()
            .map(|&variant| {
                let mut c = cfg.clone();
                c.train.conle.variant = variant;
                c.out = cfg.out.join(variant.label());
                run_on(&c, &ds)
            })
            .collect::<Result<_>>()
    })?;
    for out in &outputs {
        write_run(out, &out.record.config.out)?;
    }
    let records: Vec<ExperimentRecord> = outputs.into_iter().map(|o| o.record).collect();
    create_dir(&cfg.out)?;
    write_text(
        &cfg.out.join("table.txt"),
        &comparison_table(&ds.name, &records),
    )?;
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda1,
    Lambda2,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda1 => "lambda1",
            SweepParam::Lambda2 => "lambda2",
        }
    }
}

/// The sensitivity grid used for both weights.
pub const SENSITIVITY_GRID: [f64; 7] = [0.1, 0.3, 0.5, 0.8, 1.0, 5.0, 10.0];

/// One run per value, written to `<out>/<param>=<value>`, plus `sweep.csv`.
pub fn cmd_sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<ExperimentRecord>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".to_string()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!(
            "sweep values must be positive, got {v}"
        )));
    }
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let outputs: Vec<RunOutput> = cfg.pool()?.install(|| {
        values
            .par_iter()
            .map(|&v| {
                let mut c = cfg.clone();
                match param {
                    SweepParam::Lambda1 => c.train.conle.lambda1 = v,
                    SweepParam::Lambda2 => c.train.conle.lambda2 = v,
                }
                c.out = cfg.out.join(format!("{}={v}", param.name()));
                let mut out = run_on(&c, &ds)?;
                out.record.method = format!("{}[{}={v}]", out.record.method, param.name());
                Ok(out)
            })
            .collect::<Result<_>>()
    })?;
    let mut csv = format!(
        "value,{}\n",
        Metric::ALL
            .iter()
            .map(|m| m.name().to_lowercase())
            .collect::<Vec<_>>()
            .join(",")
    );
    for (v, out) in values.iter().zip(&outputs) {
        write_run(out, &out.record.config.out)?;
        let cells: Vec<String> = Metric::ALL
            .iter()
            .map(|&m| out.record.aggregate.get(m).to_string())
            .collect();
        csv.push_str(&format!("{v},{}\n", cells.join(",")));
    }
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("sweep.csv"), &csv)?;
    Ok(outputs.into_iter().map(|o| o.record).collect())
}

/// Synthesizes a dataset and writes its three CSV files into `dir`.
pub fn cmd_synth(
    n: usize,
    dim1: usize,
    c: usize,
    seed: u64,
    noise: f64,
    dir: &Path,
) -> Result<LeDataset> {
    let ds = synth_generate(n, dim1, c, seed, noise)?;
    ds.write_csv(dir)?;
    Ok(ds)
}

/// Rank tables for every measure across the given records.
pub fn rank_tables(records: &[ExperimentRecord]) -> Result<Vec<RankTable>> {
    let mut methods: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), MetricReport> = BTreeMap::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
        if cells
            .insert((r.method.clone(), r.dataset.clone()), r.aggregate)
            .is_some()
        {
            return Err(Error::InvalidArgument(format!(
                "two records for method {} on dataset {}",
                r.method, r.dataset
            )));
        }
    }
    for m in &methods {
        let missing: Vec<&String> = datasets
            .iter()
            .filter(|d| !cells.contains_key(&(m.clone(), (*d).clone())))
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "inconsistent dataset coverage: method {m} has no record for {missing:?}"
            )));
        }
    }
    Metric::ALL
        .iter()
        .map(|&metric| {
            let values: Vec<Vec<Option<f64>>> = methods
                .iter()
                .map(|m| {
                    datasets
                        .iter()
                        .map(|d| cells.get(&(m.clone(), d.clone())).map(|r| r.get(metric)))
                        .collect()
                })
                .collect();
            average_ranks(
                metric.name(),
                metric.direction(),
                &methods,
                &datasets,
                &values,
            )
        })
        .collect()
}

/// Reads records, writes `ranks.json` and `table.txt` into `out`.
pub fn cmd_report(paths: &[PathBuf], out: &Path) -> Result<Vec<RankTable>> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument(
            "report needs at least one record".to_string(),
        ));
    }
    let records: Vec<ExperimentRecord> = paths
        .iter()
        .map(|p| ExperimentRecord::load(p))
        .collect::<Result<_>>()?;
    let tables = rank_tables(&records)?;
    create_dir(out)?;
    write_text(
        &out.join("ranks.json"),
        &serde_json::to_string_pretty(&tables)?,
    )?;
    let text: Vec<String> = tables.iter().map(RankTable::render).collect();
    write_text(&out.join("table.txt"), &text.join("\n"))?;
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub instance: usize,
    /// Variant label, or the isolated term for per-term cases.
    pub objective: String,
    pub threshold_form: ThresholdForm,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub instances: usize,
    pub h: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub max_error: f64,
    /// Worst error per objective: each variant, and each loss term on its own.
    pub breakdown: BTreeMap<String, f64>,
    pub cases: Vec<GradcheckCase>,
}

pub const GRADCHECK_INSTANCES: usize = 20;
pub const GRADCHECK_H: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

fn random_logical(r: &mut impl Rng, b: usize, c: usize) -> Array2<f64> {
    let mut l = Array2::zeros((b, c));
    for mut row in l.outer_iter_mut() {
        let ones = r.random_range(1..c);
        let mut idx: Vec<usize> = (0..c).collect();
        for i in 0..ones {
            let j = r.random_range(i..c);
            idx.swap(i, j);
            row[idx[i]] = 1.0;
        }
    }
    l
}

/// Distance from non-differentiable points below which an instance is redrawn:
/// central differences straddling a kink measure nothing useful.
const KINK_MARGIN: f64 = 1e-3;
const MIN_EMBED_NORM: f64 = 0.1;

fn near_kink(model: &ConleModel, x: &Array2<f64>, l: &Array2<f64>, epsilon: f64) -> Result<bool> {
    let emb = embed(&model.f1, &model.f2, x, l)?;
    // cosine similarity is singular at the origin
    let short = |m: &Array2<f64>| m.outer_iter().any(|r| r.dot(&r).sqrt() < MIN_EMBED_NORM);
    if short(&emb.z) || short(&emb.q) {
        return Ok(true);
    }
    let traces = [
        model.f1.forward(x)?,
        model.f2.forward(l)?,
        model.f3.forward(&emb.h)?,
    ];
    let hidden_kink = traces.iter().any(|t| {
        let hidden = &t.pre_activations[..t.pre_activations.len() - 1];
        hidden.iter().flatten().any(|v| v.abs() < KINK_MARGIN)
    });
    if hidden_kink {
        return Ok(true);
    }
    let d = &traces[2].output;
    for (row, labels) in d.outer_iter().zip(l.outer_iter()) {
        let rel: Vec<f64> = row
            .iter()
            .zip(labels)
            .filter(|p| *p.1 == 1.0)
            .map(|p| *p.0)
            .collect();
        let irr: Vec<f64> = row
            .iter()
            .zip(labels)
            .filter(|p| *p.1 == 0.0)
            .map(|p| *p.0)
            .collect();
        let close = |a: f64, b: f64| (a - b).abs() < KINK_MARGIN;
        // hinge hinges, and ties that switch the worst pair
        if rel
            .iter()
            .any(|&r| irr.iter().any(|&i| close(i + epsilon, r)))
        {
            return Ok(true);
        }
        for group in [&rel, &irr] {
            for (a, &u) in group.iter().enumerate() {
                if group[a + 1..].iter().any(|&v| close(u, v)) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn check_objective(
    model: &ConleModel,
    x: &Array2<f64>,
    l: &Array2<f64>,
    cfg: &ConleConfig,
) -> Result<f64> {
    let analytic = loss_gradients(model, x, l, cfg)?.grads.flatten();
    let mut probe = model.clone();
    let mut failure = None;
    let err = finite_difference_check(&model.flat_params(), &analytic, GRADCHECK_H, |p| {
        probe.set_flat_params(p).expect("same architecture");
        match objective_value(&probe, x, l, cfg) {
            Ok(b) => b.total,
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

/// Tiny random network and batch for instance `instance` of a gradient check,
/// redrawn until it sits clear of every kink.
pub fn gradcheck_instance(
    seed: u64,
    instance: usize,
) -> Result<(ConleConfig, ConleModel, Array2<f64>, Array2<f64>)> {
    let mut r = rng::stream(rng::derive_seed(seed, instance as u64), 0);
    let b = r.random_range(3..=6);
    let dim1 = r.random_range(2..=4);
    let c = r.random_range(3..=5);
    let base = ConleConfig {
        dim2: r.random_range(3..=5),
        hidden_dim: r.random_range(4..=6),
        epsilon: 0.2,
        ..Default::default()
    };
    let (x, l, model) = loop {
        let x = Array2::from_shape_fn((b, dim1), |_| r.sample(rand_distr::StandardNormal));
        let l = random_logical(&mut r, b, c);
        let model = ConleModel::init(dim1, c, &base, r.random())?;
        if !near_kink(&model, &x, &l, base.epsilon)? {
            break (x, l, model);
        }
    };
    Ok((base, model, x, l))
}

/// Central-difference check of the full objective, every variant and both
/// threshold forms, plus each loss term in isolation, on tiny random instances.
pub fn cmd_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let mut cases = Vec::new();
    for instance in 0..GRADCHECK_INSTANCES {
        let (base, model, x, l) = gradcheck_instance(seed, instance)?;
        for form in [ThresholdForm::WorstPair, ThresholdForm::AllPairs] {
            let with = |variant, lambda1, lambda2| ConleConfig {
                variant,
                threshold_form: form,
                lambda1,
                lambda2,
                ..base.clone()
            };
            let mut objectives: Vec<(String, ConleConfig)> = Variant::ALL
                .iter()
                .map(|&v| (v.label().to_string(), with(v, base.lambda1, base.lambda2)))
                .collect();
            objectives.push(("l_con".to_string(), with(Variant::Full, 0.0, 0.0)));
            objectives.push(("l_dis".to_string(), with(Variant::AblationH, 1.0, 0.0)));
            objectives.push(("l_thr".to_string(), with(Variant::AblationH, 0.0, 1.0)));
            for (objective, cfg) in objectives {
                let error = check_objective(&model, &x, &l, &cfg)?;
                cases.push(GradcheckCase {
                    instance,
                    objective,
                    threshold_form: form,
                    error,
                });
            }
        }
    }
    let mut breakdown: BTreeMap<String, f64> = BTreeMap::new();
    for case in &cases {
        let slot = breakdown.entry(case.objective.clone()).or_insert(0.0);
        *slot = slot.max(case.error);
    }
    let max_error = cases.iter().map(|c| c.error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        instances: GRADCHECK_INSTANCES,
        h: GRADCHECK_H,
        tolerance: GRADCHECK_TOL,
        passed: max_error < GRADCHECK_TOL,
        max_error,
        breakdown,
        cases,
    })
}
