use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctrl_ransac::experiments::{ExperimentKind, ExperimentPlan, SyntheticSpec};
use ctrl_ransac::inference::Method;
use ctrl_ransac::pipeline::TestOptions;
use ctrl_ransac::ransac::RansacConfig;
use ctrl_ransac::truncation::OptimalityRule;
use ctrl_ransac::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ctrl-ransac", version, about = "RANSAC anomaly detection with selective p-values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run RANSAC and list the detected anomalies (0-based row indices).
    Detect(DetectArgs),
    /// Detect, then compute a p-value for every detected anomaly.
    Test(TestArgs),
    /// Write a synthetic dataset with an `is_anomaly` truth column.
    Gen(GenArgs),
    /// Monte Carlo FPR / TPR / timing sweeps.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Noise covariance of the input response.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSource {
    Identity,
    Scaled(f64),
    Correlated(f64),
    Estimate,
    File(PathBuf),
}

impl FromStr for SigmaSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let number = |v: &str| v.parse::<f64>().map_err(|_| format!("'{v}' is not a number"));
        match s.split_once(':') {
            None if s == "identity" => Ok(SigmaSource::Identity),
            None if s == "estimate" => Ok(SigmaSource::Estimate),
            Some(("scaled", v)) => number(v).map(SigmaSource::Scaled),
            Some(("correlated", v)) => number(v).map(SigmaSource::Correlated),
            Some(("file", v)) => Ok(SigmaSource::File(PathBuf::from(v))),
            _ => Err(format!(
                "expected identity, scaled:<variance>, correlated:<rho>, estimate or file:<path>, got '{s}'"
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    /// Number of sampled models.
    #[arg(short = 'B', long, default_value_t = 15)]
    pub iterations: usize,
    /// Squared-residual inlier threshold.
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
    /// Rows per sampled subset (default: number of features).
    #[arg(long)]
    pub subset_size: Option<usize>,
    #[arg(long, env = "CTRL_RANSAC_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl RansacArgs {
    pub fn config(&self) -> RansacConfig {
        RansacConfig {
            iterations: self.iterations,
            tau: self.tau,
            subset_size: self.subset_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a header, a `y` column and numeric feature columns.
    #[arg(short, long)]
    pub input: PathBuf,
    /// identity | scaled:<variance> | correlated:<rho> | estimate | file:<path>
    #[arg(long, default_value = "identity")]
    pub sigma: SigmaSource,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub ransac: RansacArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub ransac: RansacArgs,
    /// ctrl, line_search, oc, naive, bonferroni, or all; comma-separated.
    #[arg(short, long = "method", default_value = "ctrl", value_delimiter = ',')]
    pub method: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Require the selected model to strictly beat every other model.
    #[arg(long)]
    pub unique_optimum: bool,
    /// Line-search window (both ends needed).
    #[arg(long, allow_negative_numbers = true, requires = "z_max")]
    pub z_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "z_min")]
    pub z_max: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Suppress the per-anomaly summary on stderr.
    #[arg(short, long)]
    pub quiet: bool,
}

fn parse_methods(items: &[String]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for item in items {
        if item.eq_ignore_ascii_case("all") {
            out.extend(Method::ALL);
        } else {
            out.push(item.parse()?);
        }
    }
    out.dedup();
    Ok(out)
}

impl TestArgs {
    pub fn methods(&self) -> Result<Vec<Method>> {
        parse_methods(&self.method)
    }

    pub fn options(&self) -> TestOptions {
        TestOptions {
            rule: if self.unique_optimum {
                OptimalityRule::Unique
            } else {
                OptimalityRule::FirstEncountered
            },
            z_range: self.z_min.zip(self.z_max),
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(short, default_value_t = 5)]
    pub p: usize,
    /// Planted anomalies (default n/5, rounded down).
    #[arg(long)]
    pub anomalies: Option<usize>,
    /// normal | laplace | skew_normal[:shape] | student_t[:df]
    #[arg(long, default_value = "normal")]
    pub noise: String,
    /// independence | correlation[:rho]
    #[arg(long, default_value = "independence")]
    pub covariance: String,
}

impl SyntheticArgs {
    fn spec(&self, n: usize, delta: f64, seed: u64) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            covariance: self.covariance.parse()?,
            noise: self.noise.parse()?,
            anomaly_count: self.anomalies,
            delta,
            seed,
            ..SyntheticSpec::new(n, self.p)
        })
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(short, default_value_t = 100)]
    pub n: usize,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Shift added to the planted anomalies.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, env = "CTRL_RANSAC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

impl GenArgs {
    pub fn spec(&self) -> Result<SyntheticSpec> {
        self.synthetic.spec(self.n, self.delta, self.seed)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Fpr,
    Tpr,
    Timing,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Fpr => ExperimentKind::Fpr,
            KindArg::Tpr => ExperimentKind::Tpr,
            KindArg::Timing => ExperimentKind::Timing,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum, required_unless_present = "manifest")]
    pub kind: Option<KindArg>,
    /// Re-run a previously written manifest; other settings are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Sample sizes: a value, a list `50,100`, or a range `50..250` with --step.
    #[arg(short, default_value = "100")]
    pub n: String,
    #[arg(long)]
    pub step: Option<f64>,
    /// Anomaly shifts, same syntax as -n (default 0 for fpr, 3 otherwise).
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub delta_step: Option<f64>,
    /// Model counts, same syntax as -n.
    #[arg(short = 'B', long, default_value = "15")]
    pub iterations: String,
    #[arg(long)]
    pub iterations_step: Option<f64>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Hand the analysis the empirical noise variance instead of the truth.
    #[arg(long)]
    pub estimate_variance: bool,
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
    #[arg(long)]
    pub subset_size: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Methods to compare (default ctrl,oc,naive,bonferroni; ctrl,line_search for timing).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long, env = "CTRL_RANSAC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
    #[arg(short, long)]
    pub quiet: bool,
}

/// `a`, `a,b,c`, or `a..b` stepping by `step` (default 1), inclusive.
pub fn parse_values(text: &str, step: Option<f64>) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("cannot parse value list '{text}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi, step) = (num(lo)?, num(hi)?, step.unwrap_or(1.0));
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| lo + step * k as f64).collect());
    }
    text.split(',').map(num).collect()
}

fn parse_counts(text: &str, step: Option<f64>) -> Result<Vec<usize>> {
    parse_values(text, step)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidInput(format!("'{v}' is not a count")))
            }
        })
        .collect()
}

impl ExperimentArgs {
    pub fn plan(&self) -> Result<ExperimentPlan> {
        let kind: ExperimentKind = self.kind.expect("clap enforces kind or manifest").into();
        let n_values = parse_counts(&self.n, self.step)?;
        let default_delta = if kind == ExperimentKind::Fpr { "0" } else { "3" };
        let delta_values = parse_values(self.delta.as_deref().unwrap_or(default_delta), self.delta_step)?;
        let iteration_values = parse_counts(&self.iterations, self.iterations_step)?;
        let methods = if self.methods.is_empty() {
            match kind {
                ExperimentKind::Timing => vec![Method::Ctrl, Method::LineSearch],
                _ => vec![Method::Ctrl, Method::Oc, Method::Naive, Method::Bonferroni],
            }
        } else {
            parse_methods(&self.methods)?
        };
        let mut base = self.synthetic.spec(n_values[0], delta_values[0], self.seed)?;
        base.estimate_variance = self.estimate_variance;
        let ransac = RansacConfig {
            iterations: iteration_values[0],
            tau: self.tau,
            subset_size: self.subset_size,
            seed: self.seed,
        };
        let mut plan = ExperimentPlan::new(kind, base, ransac, methods);
        plan.trials = self.trials;
        plan.alpha = self.alpha;
        plan.n_values = n_values;
        plan.delta_values = delta_values;
        plan.iteration_values = iteration_values;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("50..250", Some(50.0)).unwrap(), vec![50.0, 100.0, 150.0, 200.0, 250.0]);
        assert_eq!(parse_values("1..5", None).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_values("0.5,2", None).unwrap(), vec![0.5, 2.0]);
        assert_eq!(parse_values("7", None).unwrap(), vec![7.0]);
        assert!(parse_values("5..1", None).is_err());
        assert!(parse_counts("1.5", None).is_err());
    }

    #[test]
    fn sigma_sources() {
        assert_eq!("scaled:2".parse::<SigmaSource>().unwrap(), SigmaSource::Scaled(2.0));
        assert_eq!("correlated:0.5".parse::<SigmaSource>().unwrap(), SigmaSource::Correlated(0.5));
        assert!("bogus".parse::<SigmaSource>().is_err());
    }

    #[test]
    fn all_methods_expand() {
        assert_eq!(parse_methods(&["all".into()]).unwrap(), Method::ALL.to_vec());
        assert!(parse_methods(&["magic".into()]).is_err());
    }
}
