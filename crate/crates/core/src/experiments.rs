//! Synthetic regression data, standardized noise families, and Monte Carlo harnesses
//! for false/true positive rates and region timing.
//!
//! Trial `t` of a run with master seed `s` draws everything from `trial_seed(s, t)`,
//! so results do not depend on scheduling or worker count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Method;
use crate::linreg::{empirical_noise_variance, Covariance, Dataset, NoiseCovariance};
use crate::par;
use crate::pipeline::{Analysis, TestOptions};
use crate::ransac::RansacConfig;
use crate::truncation::ResidualRegionTable;

/// Noise family, always rescaled to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Normal,
    Laplace,
    SkewNormal { shape: f64 },
    StudentT { df: f64 },
}

impl NoiseKind {
    pub const SKEW_SHAPE: f64 = 10.0;
    pub const T_DF: f64 = 20.0;
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Normal => f.write_str("normal"),
            NoiseKind::Laplace => f.write_str("laplace"),
            NoiseKind::SkewNormal { shape } => write!(f, "skew_normal:{shape}"),
            NoiseKind::StudentT { df } => write!(f, "student_t:{df}"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    /// `normal`, `laplace`, `skew_normal[:shape]`, `student_t[:df]` (also `t20`).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('-', "_");
        let (name, param) = match lower.split_once(':') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (lower.clone(), None),
        };
        let parse = |default: f64| -> Result<f64> {
            match &param {
                None => Ok(default),
                Some(v) => v
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad noise parameter in '{s}'"))),
            }
        };
        let kind = match name.as_str() {
            "normal" | "gaussian" => NoiseKind::Normal,
            "laplace" => NoiseKind::Laplace,
            "skew_normal" | "skewnormal" => NoiseKind::SkewNormal {
                shape: parse(Self::SKEW_SHAPE)?,
            },
            "student_t" | "t" => NoiseKind::StudentT { df: parse(Self::T_DF)? },
            "t20" => NoiseKind::StudentT { df: 20.0 },
            _ => return Err(Error::InvalidInput(format!("unknown noise kind '{s}'"))),
        };
        if let NoiseKind::StudentT { df } = kind {
            if !(df > 2.0) {
                return Err(Error::InvalidInput(format!("student_t needs df > 2 for finite variance, got {df}")));
            }
        }
        Ok(kind)
    }
}

/// Covariance structure of the synthetic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    Independence,
    /// `Σ_ij = ρ^|i−j|`.
    Correlation { rho: f64 },
    Custom { matrix: Vec<Vec<f64>> },
}

impl CovarianceKind {
    pub const DEFAULT_RHO: f64 = 0.5;

    pub fn materialize(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            CovarianceKind::Independence => Ok(DMatrix::identity(n, n)),
            CovarianceKind::Correlation { rho } => {
                Ok(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
            }
            CovarianceKind::Custom { matrix } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{n}x{n} covariance"),
                        found: format!("{} rows", matrix.len()),
                    });
                }
                Ok(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
        }
    }
}

impl FromStr for CovarianceKind {
    type Err = Error;

    /// `independence` or `correlation[:rho]`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.split_once(':') {
            None if lower == "independence" || lower == "identity" => Ok(CovarianceKind::Independence),
            None if lower == "correlation" => Ok(CovarianceKind::Correlation {
                rho: Self::DEFAULT_RHO,
            }),
            Some(("correlation", v)) => v
                .parse()
                .map(|rho| CovarianceKind::Correlation { rho })
                .map_err(|_| Error::InvalidInput(format!("bad correlation '{s}'"))),
            _ => Err(Error::InvalidInput(format!("unknown covariance '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// Defaults to `(1, 2, 1, 2, …)`.
    pub beta_star: Option<Vec<f64>>,
    pub covariance: CovarianceKind,
    pub noise: NoiseKind,
    /// Defaults to `⌊n/5⌋`.
    pub anomaly_count: Option<usize>,
    pub delta: f64,
    pub seed: u64,
    /// Hand the analysis `σ̂²·I` instead of the true covariance.
    pub estimate_variance: bool,
}

impl SyntheticSpec {
    pub fn new(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            beta_star: None,
            covariance: CovarianceKind::Independence,
            noise: NoiseKind::Normal,
            anomaly_count: None,
            delta: 0.0,
            seed: 0,
            estimate_variance: false,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_star
            .clone()
            .unwrap_or_else(|| (0..self.p).map(|j| if j % 2 == 0 { 1.0 } else { 2.0 }).collect())
    }

    pub fn planted(&self) -> usize {
        self.anomaly_count.unwrap_or(self.n / 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput("n and p must be positive".into()));
        }
        if self.planted() > self.n {
            return Err(Error::InvalidInput(format!(
                "anomaly count {} exceeds n = {}",
                self.planted(),
                self.n
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if self.beta().len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: format!("beta of length {}", self.p),
                found: format!("length {}", self.beta().len()),
            });
        }
        Ok(())
    }
}

fn draw_noise<R: Rng>(kind: NoiseKind, size: usize, rng: &mut R) -> Vec<f64> {
    match kind {
        NoiseKind::Normal => (0..size).map(|_| rng.sample(StandardNormal)).collect(),
        NoiseKind::Laplace => {
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            (0..size)
                .map(|_| {
                    let u: f64 = rng.random_range(-0.5..0.5);
                    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                })
                .collect()
        }
        NoiseKind::SkewNormal { shape } => {
            let delta = shape / (1.0 + shape * shape).sqrt();
            let mean = delta * (2.0 / std::f64::consts::PI).sqrt();
            let sd = (1.0 - 2.0 * delta * delta / std::f64::consts::PI).sqrt();
            (0..size)
                .map(|_| {
                    let u: f64 = rng.sample(StandardNormal);
                    let v: f64 = rng.sample(StandardNormal);
                    (delta * u.abs() + (1.0 - delta * delta).sqrt() * v - mean) / sd
                })
                .collect()
        }
        NoiseKind::StudentT { df } => {
            let dist = StudentT::new(df).expect("df validated");
            let scale = ((df - 2.0) / df).sqrt();
            (0..size).map(|_| scale * rng.sample(dist)).collect()
        }
    }
}

/// `size` standardized draws from `kind`.
pub fn noise_sample(kind: NoiseKind, size: usize, seed: u64) -> Result<Vec<f64>> {
    if let NoiseKind::StudentT { df } = kind {
        if !(df > 2.0) {
            return Err(Error::InvalidInput(format!("student_t needs df > 2, got {df}")));
        }
    }
    Ok(draw_noise(kind, size, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `Y = Xβ* + ε` with `⌊n/5⌋` (or the configured count) entries shifted by `Δ`.
/// Returns the dataset and the sorted planted indices.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let white = DVector::from_vec(draw_noise(spec.noise, n, &mut rng));
    let sigma = spec.covariance.materialize(n)?;
    let noise = match spec.covariance {
        CovarianceKind::Independence => white,
        _ => {
            let chol = Cholesky::new(sigma.clone())
                .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
            chol.l() * white
        }
    };
    let mut y = &x * DVector::from_vec(spec.beta()) + noise;
    let mut planted = rand::seq::index::sample(&mut rng, n, spec.planted()).into_vec();
    planted.sort_unstable();
    for &i in &planted {
        y[i] += spec.delta;
    }
    let cov = if spec.estimate_variance {
        Covariance::Estimate
    } else {
        match spec.covariance {
            CovarianceKind::Independence => Covariance::identity(),
            _ => Covariance::Dense(sigma),
        }
    };
    Ok((Dataset::new(x, y, cov)?, planted))
}

/// `σ̂²·I` from the full-data least-squares residuals, divisor `n − p`.
pub fn estimate_sigma(data: &Dataset) -> Result<NoiseCovariance> {
    empirical_noise_variance(&data.x, &data.y).map(NoiseCovariance::Scaled)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under master seed `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ splitmix64(trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fpr,
    Tpr,
    Timing,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Fpr => "fpr",
            ExperimentKind::Tpr => "tpr",
            ExperimentKind::Timing => "timing",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            ExperimentKind::Fpr => "rejected / tested, pooled over trials; every detected point is tested and is a true null",
            ExperimentKind::Tpr => "planted-detected-rejected / planted-detected, pooled over trials; only detected planted points are tested",
            ExperimentKind::Timing => "mean wall-clock seconds per tested anomaly, residual table plus region plus p-value, one worker",
        }
    }

    fn tests_planted_only(self) -> bool {
        matches!(self, ExperimentKind::Tpr)
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpr" => Ok(ExperimentKind::Fpr),
            "tpr" => Ok(ExperimentKind::Tpr),
            "timing" => Ok(ExperimentKind::Timing),
            _ => Err(Error::InvalidInput(format!("unknown experiment '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// `(anomaly index, p-value)` for every test that succeeded.
    pub p_values: Vec<(usize, f64)>,
    /// Tests that ended in a numeric or consistency error.
    pub failures: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub detected: Vec<usize>,
    pub truth: Vec<usize>,
    pub tested: Vec<usize>,
    pub methods: Vec<MethodOutcome>,
}

impl TrialOutcome {
    pub fn method(&self, m: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|o| o.method == m)
    }
}

/// One synthetic trial: generate, detect, and test the relevant detections.
pub fn run_trial(
    spec: &SyntheticSpec,
    ransac: &RansacConfig,
    methods: &[Method],
    opts: &TestOptions,
    kind: ExperimentKind,
    trial: usize,
) -> Result<TrialOutcome> {
    let seed = trial_seed(spec.seed, trial as u64);
    let trial_spec = SyntheticSpec {
        seed,
        ..spec.clone()
    };
    let (data, truth) = gen_synthetic(&trial_spec)?;
    let cfg = RansacConfig {
        seed: splitmix64(seed),
        ..ransac.clone()
    };
    let analysis = Analysis::run(&data, &cfg)?;
    let detected = analysis.anomalies().to_vec();
    let tested: Vec<usize> = if analysis.detection().no_inliers {
        Vec::new()
    } else if kind.tests_planted_only() {
        detected.iter().copied().filter(|i| truth.binary_search(i).is_ok()).collect()
    } else {
        detected.clone()
    };
    let mut outcomes: Vec<MethodOutcome> = methods
        .iter()
        .map(|&method| MethodOutcome {
            method,
            p_values: Vec::new(),
            failures: 0,
            seconds: 0.0,
        })
        .collect();
    let any_conditional = methods.iter().any(|m| m.is_conditional());
    for &i in &tested {
        let started = Instant::now();
        let prepared = analysis.context(i).and_then(|ctx| {
            let table = if any_conditional {
                analysis.table(&ctx)?
            } else {
                ResidualRegionTable::from_regions(Vec::new())
            };
            Ok((ctx, table))
        });
        let setup = started.elapsed().as_secs_f64();
        let Ok((ctx, table)) = prepared else {
            outcomes.iter_mut().for_each(|o| o.failures += 1);
            continue;
        };
        for out in outcomes.iter_mut() {
            let started = Instant::now();
            let result = analysis.p_value(out.method, &ctx, &table, opts);
            out.seconds += started.elapsed().as_secs_f64()
                + if out.method.is_conditional() { setup } else { 0.0 };
            match result {
                Ok(report) => out.p_values.push((i, report.p_value)),
                Err(_) => out.failures += 1,
            }
        }
    }
    Ok(TrialOutcome {
        trial,
        detected,
        truth,
        tested,
        methods: outcomes,
    })
}

/// `trials` independent trials; run concurrently except for timing.
pub fn run_trials(
    spec: &SyntheticSpec,
    ransac: &RansacConfig,
    methods: &[Method],
    opts: &TestOptions,
    kind: ExperimentKind,
    trials: usize,
) -> Result<Vec<TrialOutcome>> {
    if kind == ExperimentKind::Timing {
        return par::single_worker(|| {
            (0..trials)
                .map(|t| run_trial(spec, ransac, methods, opts, kind, t))
                .collect()
        });
    }
    par::map_range(trials, |t| run_trial(spec, ransac, methods, opts, kind, t))
        .into_iter()
        .collect()
}

/// P-values of `method` over all trials, in trial order.
pub fn pooled_p_values(outcomes: &[TrialOutcome], method: Method) -> Vec<f64> {
    outcomes
        .iter()
        .filter_map(|o| o.method(method))
        .flat_map(|m| m.p_values.iter().map(|&(_, p)| p))
        .collect()
}

pub const NO_INFERENCE: &str = "no_inference";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: ExperimentKind,
    pub method: String,
    pub n: usize,
    pub delta: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub trials: usize,
    pub tested: usize,
    pub rejected: usize,
    pub failures: usize,
    /// FPR or TPR; `None` when nothing was tested.
    pub rate: Option<f64>,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn rate(&self, method: &str) -> Option<f64> {
        self.row(method).and_then(|r| r.rate)
    }
}

/// Pools outcomes into one row per method plus a no-inference row (rates only).
#[allow(clippy::too_many_arguments)]
pub fn summarize(
    kind: ExperimentKind,
    outcomes: &[TrialOutcome],
    methods: &[Method],
    alpha: f64,
    n: usize,
    delta: f64,
    iterations: usize,
) -> MetricsTable {
    let trials = outcomes.len();
    let base = |method: String| MetricsRow {
        experiment: kind,
        method,
        n,
        delta,
        iterations,
        alpha,
        trials,
        tested: 0,
        rejected: 0,
        failures: 0,
        rate: None,
        mean_seconds: None,
    };
    let mut rows: Vec<MetricsRow> = methods
        .iter()
        .map(|&m| {
            let mut row = base(m.to_string());
            let mut seconds = 0.0;
            for out in outcomes.iter().filter_map(|o| o.method(m)) {
                row.tested += out.p_values.len();
                row.rejected += out.p_values.iter().filter(|&&(_, p)| p <= alpha).count();
                row.failures += out.failures;
                seconds += out.seconds;
            }
            if row.tested > 0 {
                row.rate = Some(row.rejected as f64 / row.tested as f64);
                row.mean_seconds = Some(seconds / row.tested as f64);
            }
            row
        })
        .collect();
    if kind != ExperimentKind::Timing {
        let mut row = base(NO_INFERENCE.to_string());
        row.tested = outcomes.iter().map(|o| o.tested.len()).sum();
        row.rejected = row.tested;
        if row.tested > 0 {
            row.rate = Some(1.0);
        }
        rows.push(row);
    }
    MetricsTable { rows }
}

pub fn run_fpr_experiment(
    spec: &SyntheticSpec,
    ransac: &RansacConfig,
    methods: &[Method],
    trials: usize,
    alpha: f64,
    opts: &TestOptions,
) -> Result<MetricsTable> {
    if spec.delta != 0.0 && spec.planted() > 0 {
        return Err(Error::InvalidInput("FPR experiments need delta = 0 or no planted anomalies".into()));
    }
    let outcomes = run_trials(spec, ransac, methods, opts, ExperimentKind::Fpr, trials)?;
    Ok(summarize(ExperimentKind::Fpr, &outcomes, methods, alpha, spec.n, spec.delta, ransac.iterations))
}

pub fn run_tpr_experiment(
    spec: &SyntheticSpec,
    ransac: &RansacConfig,
    methods: &[Method],
    trials: usize,
    alpha: f64,
    opts: &TestOptions,
) -> Result<MetricsTable> {
    if !(spec.delta > 0.0) || spec.planted() == 0 {
        return Err(Error::InvalidInput("TPR experiments need delta > 0 and planted anomalies".into()));
    }
    let outcomes = run_trials(spec, ransac, methods, opts, ExperimentKind::Tpr, trials)?;
    Ok(summarize(ExperimentKind::Tpr, &outcomes, methods, alpha, spec.n, spec.delta, ransac.iterations))
}

/// Mean per-anomaly wall time of each method, on one worker.
pub fn run_timing(
    spec: &SyntheticSpec,
    ransac: &RansacConfig,
    methods: &[Method],
    trials: usize,
    opts: &TestOptions,
) -> Result<MetricsTable> {
    let outcomes = run_trials(spec, ransac, methods, opts, ExperimentKind::Timing, trials)?;
    Ok(summarize(ExperimentKind::Timing, &outcomes, methods, f64::NAN, spec.n, spec.delta, ransac.iterations))
}

/// Everything needed to reproduce a sweep; written next to its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub base: SyntheticSpec,
    pub ransac: RansacConfig,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub alpha: f64,
    pub options: TestOptions,
    /// Sweep values; an empty list keeps the base setting.
    pub n_values: Vec<usize>,
    pub delta_values: Vec<f64>,
    pub iteration_values: Vec<usize>,
}

impl ExperimentPlan {
    pub fn new(kind: ExperimentKind, base: SyntheticSpec, ransac: RansacConfig, methods: Vec<Method>) -> Self {
        Self {
            kind,
            base,
            ransac,
            methods,
            trials: 1000,
            alpha: 0.05,
            options: TestOptions::default(),
            n_values: Vec::new(),
            delta_values: Vec::new(),
            iteration_values: Vec::new(),
        }
    }

    fn settings(&self) -> Vec<(usize, f64, usize)> {
        let ns = if self.n_values.is_empty() { vec![self.base.n] } else { self.n_values.clone() };
        let deltas = if self.delta_values.is_empty() { vec![self.base.delta] } else { self.delta_values.clone() };
        let bs = if self.iteration_values.is_empty() {
            vec![self.ransac.iterations]
        } else {
            self.iteration_values.clone()
        };
        let mut out = Vec::new();
        for &n in &ns {
            for &d in &deltas {
                for &b in &bs {
                    out.push((n, d, b));
                }
            }
        }
        out
    }

    /// Runs every setting and concatenates the rows.
    pub fn run(&self) -> Result<MetricsTable> {
        let mut rows = Vec::new();
        for (n, delta, iterations) in self.settings() {
            let spec = SyntheticSpec {
                n,
                delta,
                ..self.base.clone()
            };
            let ransac = RansacConfig {
                iterations,
                ..self.ransac.clone()
            };
            let table = match self.kind {
                ExperimentKind::Fpr => {
                    run_fpr_experiment(&spec, &ransac, &self.methods, self.trials, self.alpha, &self.options)?
                }
                ExperimentKind::Tpr => {
                    run_tpr_experiment(&spec, &ransac, &self.methods, self.trials, self.alpha, &self.options)?
                }
                ExperimentKind::Timing => run_timing(&spec, &ransac, &self.methods, self.trials, &self.options)?,
            };
            rows.extend(table.rows);
        }
        Ok(MetricsTable { rows })
    }
}
