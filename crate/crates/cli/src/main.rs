//! `conle`: train, ablate, sweep, gradient-check, synthesize and report.
//!
//! Exit status: 0 success, 1 failed gradient check, 2 bad configuration or
//! arguments, 3 training diverged, 4 I/O or data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conle::harness::{self, ExperimentRecord, RunConfig, SweepParam, SENSITIVITY_GRID};
use conle::metrics::{Metric, MetricReport};
use conle::Error;

#[derive(Parser, Debug)]
#[command(
    name = "conle",
    version,
    about = "Label enhancement by contrastive learning"
)]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (config path `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training seed (config path `train.seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent runs; 0 uses every core (config path `workers`)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override any config value, e.g. `--set train.conle.lambda1=0.8`
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured method and protocol
    Train,
    /// Full objective against both ablations with shared seeds
    Ablate,
    /// One run per value of a loss weight
    Sweep {
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values; defaults to 0.1,0.3,0.5,0.8,1,5,10
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Finite-difference check of every loss gradient
    Gradcheck,
    /// Write a synthetic dataset as CSV files
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        dim1: usize,
        #[arg(long, default_value_t = 5)]
        c: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
    /// Rank table across experiment records
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Param {
    Lambda1,
    Lambda2,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for raw in &cli.overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects PATH=VALUE, got `{raw}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(out_dir) = &cli.out {
        out.push(("out".into(), serde_json::to_string(out_dir)?));
    }
    if let Some(seed) = cli.seed {
        out.push(("train.seed".into(), seed.to_string()));
    }
    if let Some(workers) = cli.workers {
        out.push(("workers".into(), workers.to_string()));
    }
    Ok(out)
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    RunConfig::load(cli.config.as_deref(), &overrides(cli)?)
}

fn metrics_line(r: &MetricReport) -> String {
    Metric::ALL
        .iter()
        .map(|&m| format!("{} {:.4}", m.name(), r.get(m)))
        .collect::<Vec<_>>()
        .join("  ")
}

fn print_record(r: &ExperimentRecord) {
    println!(
        "{} on {} ({} fold(s)): {}",
        r.method,
        r.dataset,
        r.folds.len(),
        metrics_line(&r.aggregate)
    );
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Train => {
            let cfg = load_config(cli)?;
            print_record(&harness::cmd_train(&cfg)?);
            println!("wrote {}", cfg.out.display());
        }
        Command::Ablate => {
            let cfg = load_config(cli)?;
            for r in harness::cmd_ablate(&cfg)? {
                print_record(&r);
            }
            println!("wrote {}", cfg.out.join("table.txt").display());
        }
        Command::Sweep { param, values } => {
            let cfg = load_config(cli)?;
            let param = match param {
                Param::Lambda1 => SweepParam::Lambda1,
                Param::Lambda2 => SweepParam::Lambda2,
            };
            let values = if values.is_empty() {
                SENSITIVITY_GRID.to_vec()
            } else {
                values.clone()
            };
            for r in harness::cmd_sweep(&cfg, param, &values)? {
                print_record(&r);
            }
            println!("wrote {}", cfg.out.join("sweep.csv").display());
        }
        Command::Gradcheck => {
            let report = harness::cmd_gradcheck(cli.seed.unwrap_or(0))?;
            for (objective, err) in &report.breakdown {
                println!("{objective:8} max relative error {err:.3e}");
            }
            let verdict = if report.passed { "PASS" } else { "FAIL" };
            println!(
                "{verdict}: max relative error {:.3e} over {} instances (tolerance {:.0e}, h {:.0e})",
                report.max_error, report.instances, report.tolerance, report.h
            );
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let path = dir.join("gradcheck.json");
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                    .map_err(|e| Error::Io { path, source: e })?;
            }
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Synth { n, dim1, c, noise } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let ds = harness::cmd_synth(*n, *dim1, *c, cli.seed.unwrap_or(0), *noise, &dir)?;
            println!(
                "wrote {} ({} x {}, {} labels) to {}",
                ds.name,
                ds.n(),
                ds.dim1(),
                ds.num_labels(),
                dir.display()
            );
        }
        Command::Report { records } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            for table in harness::cmd_report(records, &dir)? {
                println!("{}", table.render());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
