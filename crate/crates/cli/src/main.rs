//! `ctrl-ransac`: detect anomalies, test them, generate synthetic data, run experiments.
//!
//! Exit status: 0 success, 2 nothing detected, 3 input error, 4 numeric failure.

mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use ctrl_ransac::experiments::{gen_synthetic, ExperimentPlan};
use ctrl_ransac::inference::Method;
use ctrl_ransac::io::{
    read_covariance, read_csv_from, write_dataset_csv, write_json, write_metrics_csv,
    write_reports_csv, Exact, ReportDocument,
};
use ctrl_ransac::linreg::{Covariance, Dataset};
use ctrl_ransac::pipeline::Analysis;
use ctrl_ransac::{Error, Result};
use serde::Serialize;

use args::{Cli, Command, DataArgs, DetectArgs, ExperimentArgs, Format, GenArgs, SigmaSource, TestArgs};

const EXIT_EMPTY: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERIC })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Detect(a) => cmd_detect(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let parsed = read_csv_from(File::open(&args.input)?)?;
    let n = parsed.y.len();
    let sigma = match &args.sigma {
        SigmaSource::Identity => Covariance::identity(),
        SigmaSource::Scaled(s2) => Covariance::Scaled(*s2),
        SigmaSource::Correlated(rho) => Covariance::ar1(n, *rho),
        SigmaSource::Estimate => Covariance::Estimate,
        SigmaSource::File(path) => Covariance::Dense(read_covariance(path, n)?),
    };
    Dataset::new(parsed.x, parsed.y, sigma)
}

#[derive(Serialize)]
struct DetectDocument<'a> {
    n: usize,
    p: usize,
    iterations: usize,
    tau: Exact,
    seed: u64,
    optimal_model: usize,
    inlier_counts: Vec<usize>,
    anomalies: &'a [usize],
}

fn cmd_detect(a: &DetectArgs) -> Result<u8> {
    let data = load_data(&a.data)?;
    let cfg = a.ransac.config();
    let det = ctrl_ransac::ransac::detect(&data, &cfg)?;
    let mut out = open_output(a.output.as_deref())?;
    match a.format {
        Format::Json => write_json(
            &mut out,
            &DetectDocument {
                n: data.n(),
                p: data.p(),
                iterations: cfg.iterations,
                tau: Exact(cfg.tau),
                seed: cfg.seed,
                optimal_model: det.optimal,
                inlier_counts: det.inlier_sets.iter().map(Vec::len).collect(),
                anomalies: &det.anomalies,
            },
        )?,
        Format::Csv => {
            writeln!(out, "index")?;
            for i in &det.anomalies {
                writeln!(out, "{i}")?;
            }
        }
    }
    out.flush()?;
    Ok(if det.anomalies.is_empty() { EXIT_EMPTY } else { 0 })
}

fn cmd_test(a: &TestArgs) -> Result<u8> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let data = load_data(&a.data)?;
    let cfg = a.ransac.config();
    let analysis = Analysis::run(&data, &cfg)?;
    let methods: Vec<Method> = a.methods()?;
    let reports = analysis.test_all(&methods, &a.options())?;
    let mut out = open_output(a.output.as_deref())?;
    match a.format {
        Format::Json => write_json(
            &mut out,
            &ReportDocument::new(&data, analysis.detection(), cfg.tau, cfg.seed, &reports),
        )?,
        Format::Csv => write_reports_csv(&mut out, &reports)?,
    }
    out.flush()?;
    if !a.quiet {
        for r in &reports {
            let verdict = if r.p_value <= a.alpha { "reject" } else { "keep" };
            eprintln!(
                "point {:>5}  {:<11} p = {:.6e}  {verdict} at alpha = {}",
                r.anomaly_index, r.method, r.p_value, a.alpha
            );
        }
    }
    if analysis.anomalies().is_empty() {
        eprintln!("no anomalies detected");
        return Ok(EXIT_EMPTY);
    }
    Ok(0)
}

fn cmd_gen(a: &GenArgs) -> Result<u8> {
    let spec = a.spec()?;
    let (data, truth) = gen_synthetic(&spec)?;
    let mut out = open_output(a.output.as_deref())?;
    write_dataset_csv(&mut out, &data, &truth)?;
    out.flush()?;
    Ok(0)
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<u8> {
    let plan: ExperimentPlan = match &a.manifest {
        Some(path) => serde_json::from_reader(File::open(path)?)?,
        None => a.plan()?,
    };
    let table = plan.run()?;
    std::fs::create_dir_all(&a.out_dir)?;
    let stem = plan.kind.as_str();
    write_metrics_csv(BufWriter::new(File::create(a.out_dir.join(format!("{stem}.csv")))?), &table)?;
    write_json(BufWriter::new(File::create(a.out_dir.join(format!("{stem}.json")))?), &table)?;
    write_json(BufWriter::new(File::create(a.out_dir.join("manifest.json"))?), &plan)?;
    if !a.quiet {
        for r in &table.rows {
            eprintln!(
                "n={:<4} delta={:<4} B={:<3} {:<13} rate={} tested={} failures={}{}",
                r.n,
                r.delta,
                r.iterations,
                r.method,
                r.rate.map_or("n/a".to_string(), |v| format!("{v:.4}")),
                r.tested,
                r.failures,
                r.mean_seconds.map_or(String::new(), |s| format!(" mean={:.3}ms", s * 1e3)),
            );
        }
    }
    Ok(0)
}
