//! Distances and similarities between label distributions, and average-rank
//! aggregation across methods.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::STOCHASTIC_TOL;
use crate::error::{Error, Result};

/// Floor applied to the recovered degree inside the KL logarithm.
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Kl,
    Chebyshev,
    Clark,
    Canberra,
    Cosine,
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Kl,
        Metric::Chebyshev,
        Metric::Clark,
        Metric::Canberra,
        Metric::Cosine,
        Metric::Intersection,
    ];

    pub fn direction(self) -> Direction {
        match self {
            Metric::Cosine | Metric::Intersection => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Kl => "KL",
            Metric::Chebyshev => "Chebyshev",
            Metric::Clark => "Clark",
            Metric::Canberra => "Canberra",
            Metric::Cosine => "Cosine",
            Metric::Intersection => "Intersection",
        }
    }

    /// `true` if `a` is strictly better than `b` under this metric.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self.direction() {
            Direction::LowerBetter => a < b,
            Direction::HigherBetter => a > b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MetricOptions {
    /// Use `|d - d_hat|^2 / (d + d_hat)` per label instead of the usual Canberra term.
    pub canberra_squared_numerator: bool,
    /// Compute KL(recovered || truth) instead of KL(truth || recovered).
    pub kl_reversed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricReport {
    pub kl: f64,
    pub chebyshev: f64,
    pub clark: f64,
    pub canberra: f64,
    pub cosine: f64,
    pub intersection: f64,
    /// Samples aggregated.
    pub n: usize,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Kl => self.kl,
            Metric::Chebyshev => self.chebyshev,
            Metric::Clark => self.clark,
            Metric::Canberra => self.canberra,
            Metric::Cosine => self.cosine,
            Metric::Intersection => self.intersection,
        }
    }

    fn set(&mut self, metric: Metric, v: f64) {
        match metric {
            Metric::Kl => self.kl = v,
            Metric::Chebyshev => self.chebyshev = v,
            Metric::Clark => self.clark = v,
            Metric::Canberra => self.canberra = v,
            Metric::Cosine => self.cosine = v,
            Metric::Intersection => self.intersection = v,
        }
    }

    /// Unweighted arithmetic mean of several reports, field by field.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let mut out = MetricReport::default();
        if reports.is_empty() {
            return out;
        }
        let k = reports.len() as f64;
        for metric in Metric::ALL {
            out.set(
                metric,
                reports.iter().map(|r| r.get(metric)).sum::<f64>() / k,
            );
        }
        out.n = reports.iter().map(|r| r.n).sum();
        out
    }
}

fn check_stochastic(v: ArrayView1<f64>, what: &str) -> Result<()> {
    let sum = v.sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL || v.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not a distribution (sum {sum})"
        )));
    }
    Ok(())
}

fn kl(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else {
                a * (a / b.max(KL_FLOOR)).ln()
            }
        })
        .sum()
}

fn pair_value(
    d: ArrayView1<f64>,
    d_hat: ArrayView1<f64>,
    metric: Metric,
    opts: MetricOptions,
) -> f64 {
    let pairs = d.iter().zip(d_hat.iter());
    match metric {
        Metric::Kl => {
            if opts.kl_reversed {
                kl(d_hat, d)
            } else {
                kl(d, d_hat)
            }
        }
        Metric::Chebyshev => pairs.fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        Metric::Clark => pairs
            .map(|(a, b)| {
                let s = a + b;
                if s == 0.0 {
                    0.0
                } else {
                    ((a - b) / s).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt(),
        Metric::Canberra => pairs
            .map(|(a, b)| {
                let s = a + b;
                if s == 0.0 {
                    0.0
                } else if opts.canberra_squared_numerator {
                    (a - b).powi(2) / s
                } else {
                    (a - b).abs() / s
                }
            })
            .sum(),
        Metric::Cosine => {
            let dot = d.dot(&d_hat);
            let nd = d.dot(&d).sqrt();
            let nh = d_hat.dot(&d_hat).sqrt();
            if nd == 0.0 || nh == 0.0 {
                0.0
            } else {
                dot / (nd * nh)
            }
        }
        Metric::Intersection => pairs.map(|(a, b)| a.min(*b)).sum(),
    }
}

/// One measure between a true distribution `d` and a recovery `d_hat`.
pub fn metric_pair(
    d: ArrayView1<f64>,
    d_hat: ArrayView1<f64>,
    metric: Metric,
    opts: MetricOptions,
) -> Result<f64> {
    if d.len() != d_hat.len() {
        return Err(Error::shape("metric_pair", d.len(), d_hat.len()));
    }
    check_stochastic(d, "true distribution")?;
    check_stochastic(d_hat, "recovered distribution")?;
    Ok(pair_value(d, d_hat, metric, opts))
}

/// Mean of every measure over samples, in index order.
pub fn evaluate(
    recovered: &Array2<f64>,
    ground_truth: &Array2<f64>,
    opts: MetricOptions,
) -> Result<MetricReport> {
    if recovered.dim() != ground_truth.dim() {
        return Err(Error::shape(
            "evaluate",
            format!("{:?}", ground_truth.dim()),
            format!("{:?}", recovered.dim()),
        ));
    }
    let n = recovered.nrows();
    let mut sums = [0.0f64; 6];
    for (i, (d, d_hat)) in ground_truth
        .outer_iter()
        .zip(recovered.outer_iter())
        .enumerate()
    {
        check_stochastic(d, &format!("ground truth row {i}"))?;
        check_stochastic(d_hat, &format!("recovered row {i}"))?;
        for (slot, metric) in sums.iter_mut().zip(Metric::ALL) {
            *slot += pair_value(d, d_hat, metric, opts);
        }
    }
    let mut report = MetricReport {
        n,
        ..Default::default()
    };
    if n > 0 {
        for (sum, metric) in sums.iter().zip(Metric::ALL) {
            report.set(metric, sum / n as f64);
        }
    }
    Ok(report)
}

/// Per-dataset ranks of several methods on one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub metric: String,
    pub direction: Direction,
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `values[method][dataset]`.
    pub values: Vec<Vec<f64>>,
    /// `ranks[method][dataset]`, 1 = best, ties share the mean position.
    pub ranks: Vec<Vec<f64>>,
    pub average_rank: Vec<f64>,
}

/// Ranks methods per dataset (ties get the mean of their positions) and
/// averages over datasets.
pub fn average_ranks(
    metric: &str,
    direction: Direction,
    methods: &[String],
    datasets: &[String],
    values: &[Vec<Option<f64>>],
) -> Result<RankTable> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to rank".to_string()));
    }
    if datasets.is_empty() {
        return Err(Error::InvalidArgument(
            "no datasets to rank over".to_string(),
        ));
    }
    if values.len() != methods.len() {
        return Err(Error::shape("rank table rows", methods.len(), values.len()));
    }
    let mut dense = vec![vec![0.0; datasets.len()]; methods.len()];
    for (mi, row) in values.iter().enumerate() {
        if row.len() != datasets.len() {
            return Err(Error::shape(
                "rank table columns",
                datasets.len(),
                row.len(),
            ));
        }
        for (di, cell) in row.iter().enumerate() {
            dense[mi][di] = cell.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "missing value for method {} on dataset {}",
                    methods[mi], datasets[di]
                ))
            })?;
        }
    }
    let mut ranks = vec![vec![0.0; datasets.len()]; methods.len()];
    for di in 0..datasets.len() {
        let mut order: Vec<usize> = (0..methods.len()).collect();
        let key = |m: usize| match direction {
            Direction::LowerBetter => dense[m][di],
            Direction::HigherBetter => -dense[m][di],
        };
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && key(order[end]) == key(order[start]) {
                end += 1;
            }
            // positions start+1 ..= end share their mean
            let rank = (start + 1 + end) as f64 / 2.0;
            for &m in &order[start..end] {
                ranks[m][di] = rank;
            }
            start = end;
        }
    }
    let average_rank = ranks
        .iter()
        .map(|r| r.iter().sum::<f64>() / datasets.len() as f64)
        .collect();
    Ok(RankTable {
        metric: metric.to_string(),
        direction,
        methods: methods.to_vec(),
        datasets: datasets.to_vec(),
        values: dense,
        ranks,
        average_rank,
    })
}

impl RankTable {
    /// Aligned text: datasets as rows, methods as columns, the best value per
    /// row marked with `*`, average ranks in the last row.
    pub fn render(&self) -> String {
        let arrow = match self.direction {
            Direction::LowerBetter => "(lower is better)",
            Direction::HigherBetter => "(higher is better)",
        };
        let name_w = self
            .datasets
            .iter()
            .map(String::len)
            .chain(["Avg.Rank".len(), "Dataset".len()])
            .max()
            .unwrap();
        let col_w = self.methods.iter().map(String::len).max().unwrap().max(9);
        let mut out = String::new();
        let _ = writeln!(out, "{} {arrow}", self.metric);
        let _ = write!(out, "{:<name_w$}", "Dataset");
        for m in &self.methods {
            let _ = write!(out, " | {m:>col_w$}");
        }
        out.push('\n');
        let rule = name_w + self.methods.len() * (col_w + 3);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for (di, ds) in self.datasets.iter().enumerate() {
            let _ = write!(out, "{ds:<name_w$}");
            for mi in 0..self.methods.len() {
                let mark = if self.ranks[mi][di] == self.best_rank(di) {
                    "*"
                } else {
                    " "
                };
                let cell = format!("{:.4}{mark}", self.values[mi][di]);
                let _ = write!(out, " | {cell:>col_w$}");
            }
            out.push('\n');
        }
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        let _ = write!(out, "{:<name_w$}", "Avg.Rank");
        for r in &self.average_rank {
            let cell = format!("{r:.2} ");
            let _ = write!(out, " | {cell:>col_w$}");
        }
        out.push('\n');
        out
    }

    fn best_rank(&self, di: usize) -> f64 {
        self.ranks
            .iter()
            .map(|r| r[di])
            .fold(f64::INFINITY, f64::min)
    }
}
