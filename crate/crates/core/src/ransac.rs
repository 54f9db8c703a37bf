//! RANSAC anomaly detection with reproducible subset sampling.
//!
//! Subsets are drawn from a ChaCha8 stream seeded with the configured 64-bit seed,
//! so a plan depends only on `(n, m, B, seed)` and reproduces on every platform.
//! The same plan is reused for every re-detection along the test-statistic line.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linreg::{Dataset, SubsetFit};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Number of sampled models `B`.
    pub iterations: usize,
    /// Squared-residual inlier threshold `τ`.
    pub tau: f64,
    /// Rows per sampled subset; `None` means the minimal size `p`.
    pub subset_size: Option<usize>,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 15,
            tau: 2.0,
            subset_size: None,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn new(iterations: usize, tau: f64, seed: u64) -> Self {
        Self {
            iterations,
            tau,
            subset_size: None,
            seed,
        }
    }

    pub fn with_subset_size(mut self, m: usize) -> Self {
        self.subset_size = Some(m);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn resolved_subset_size(&self, p: usize) -> usize {
        self.subset_size.unwrap_or(p)
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let m = self.resolved_subset_size(p);
        if self.iterations == 0 {
            return Err(Error::InvalidInput("RANSAC needs at least one iteration".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if m < p || m > n {
            return Err(Error::InvalidInput(format!(
                "subset size must satisfy p <= m <= n (p={p}, m={m}, n={n})"
            )));
        }
        Ok(())
    }
}

/// The `B` row subsets, one per model, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub subsets: Vec<Vec<usize>>,
}

impl SubsetPlan {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Pseudo-inverse fits for every subset.
    pub fn fits(&self, x: &DMatrix<f64>) -> Result<Vec<SubsetFit>> {
        par::map_slice(&self.subsets, |s| SubsetFit::new(x, s))
            .into_iter()
            .collect()
    }
}

/// Draws `iterations` subsets of `m` distinct indices from `0..n`.
pub fn sample_subsets_raw(n: usize, m: usize, iterations: usize, seed: u64) -> Result<SubsetPlan> {
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "cannot draw subsets of size {m} from {n} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets = (0..iterations)
        .map(|_| {
            let mut s = rand::seq::index::sample(&mut rng, n, m).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    Ok(SubsetPlan { subsets })
}

pub fn sample_subsets(n: usize, p: usize, cfg: &RansacConfig) -> Result<SubsetPlan> {
    cfg.validate(n, p)?;
    sample_subsets_raw(n, cfg.resolved_subset_size(p), cfg.iterations, cfg.seed)
}

/// Indices whose squared residual is at most `tau` (closed threshold).
pub fn classify_inliers(residuals: &DVector<f64>, tau: f64) -> Vec<usize> {
    residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| *r * *r <= tau)
        .map(|(i, _)| i)
        .collect()
}

/// Per-model inlier sets of `y` under already-fitted subsets.
pub fn classify_with_fits(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    fits: &[SubsetFit],
    tau: f64,
) -> Vec<Vec<usize>> {
    fits.iter()
        .map(|f| classify_inliers(&f.residuals(x, y), tau))
        .collect()
}

/// Complement of the first largest inlier set.
pub fn anomalies_of(inlier_sets: &[Vec<usize>], n: usize) -> Vec<usize> {
    let Some(best) = first_argmax(inlier_sets.iter().map(Vec::len)) else {
        return (0..n).collect();
    };
    let mut is_inlier = vec![false; n];
    for &i in &inlier_sets[best] {
        is_inlier[i] = true;
    }
    (0..n).filter(|&i| !is_inlier[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub plan: SubsetPlan,
    pub fits: Vec<Vec<f64>>,
    pub inlier_sets: Vec<Vec<usize>>,
    /// Zero-based index of the first model with the largest consensus set.
    pub optimal: usize,
    pub inliers: Vec<usize>,
    pub anomalies: Vec<usize>,
    /// Set when even the best model has no inliers, so no hypothesis can be tested.
    pub no_inliers: bool,
}

impl DetectionResult {
    pub fn is_anomaly_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.anomalies {
            mask[i] = true;
        }
        mask
    }
}

/// First index attaining the maximum count.
pub fn first_argmax(counts: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (b, c) in counts.into_iter().enumerate() {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((b, c));
        }
    }
    best.map(|(b, _)| b)
}

/// Runs RANSAC on `y` with a fixed subset plan.
pub fn detect_with_plan(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    plan: &SubsetPlan,
    tau: f64,
) -> Result<DetectionResult> {
    let n = x.nrows();
    if plan.is_empty() {
        return Err(Error::InvalidInput("subset plan is empty".into()));
    }
    let per_model: Vec<Result<(Vec<f64>, Vec<usize>)>> = par::map_slice(&plan.subsets, |s| {
        let fit = SubsetFit::new(x, s)?;
        let beta = fit.coefficients(y);
        let residuals = y - x * &beta;
        Ok((beta.iter().copied().collect(), classify_inliers(&residuals, tau)))
    });
    let (fits, inlier_sets): (Vec<_>, Vec<_>) =
        per_model.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(assemble(plan.clone(), fits, inlier_sets, n))
}

fn assemble(
    plan: SubsetPlan,
    fits: Vec<Vec<f64>>,
    inlier_sets: Vec<Vec<usize>>,
    n: usize,
) -> DetectionResult {
    let optimal = first_argmax(inlier_sets.iter().map(Vec::len)).expect("non-empty plan");
    let inliers = inlier_sets[optimal].clone();
    let mut is_inlier = vec![false; n];
    for &i in &inliers {
        is_inlier[i] = true;
    }
    let anomalies = (0..n).filter(|&i| !is_inlier[i]).collect();
    DetectionResult {
        plan,
        fits,
        no_inliers: inliers.is_empty(),
        inlier_sets,
        optimal,
        inliers,
        anomalies,
    }
}

/// Samples a plan from `cfg` and runs RANSAC on the observed response.
pub fn detect(data: &Dataset, cfg: &RansacConfig) -> Result<DetectionResult> {
    let plan = sample_subsets(data.n(), data.p(), cfg)?;
    detect_with_plan(&data.x, &data.y, &plan, cfg.tau)
}

/// Anomaly set only, from already-computed residual vectors per model.
pub fn anomalies_from_classification(inlier_masks: &[Vec<bool>]) -> Vec<usize> {
    let best = first_argmax(inlier_masks.iter().map(|m| m.iter().filter(|&&v| v).count()))
        .expect("at least one model");
    inlier_masks[best]
        .iter()
        .enumerate()
        .filter(|(_, &inl)| !inl)
        .map(|(i, _)| i)
        .collect()
}
