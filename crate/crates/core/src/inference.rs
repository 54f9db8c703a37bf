//! Test statistics for detected anomalies and their p-values.
//!
//! For an anomaly `i` the statistic is `T_i = η_iᵀY`, the residual of `Y_i` against
//! the least-squares fit on the detected inliers. Conditioning on the nuisance
//! component restricts `Y` to the line `a + b·z` with `z = η_iᵀY`, and the selective
//! p-value is a two-sided tail of `N(0, η_iᵀΣη_i)` truncated to the region of `z`
//! that reproduces the detected anomaly set.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{Interval, IntervalSet};
use crate::linreg::{pseudo_inverse, NoiseCovariance};
use crate::stats::{ln_gaussian_mass, ln_norm_sf};

/// Regions whose Gaussian mass falls below this are reported as numeric failures.
pub const MIN_REGION_MASS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact truncation region by divide-and-conquer and dynamic programming.
    Ctrl,
    /// Exact truncation region by walking trajectory cells along the line.
    LineSearch,
    /// Over-conditioning on the full observed trajectory.
    Oc,
    Naive,
    Bonferroni,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ctrl,
        Method::LineSearch,
        Method::Oc,
        Method::Naive,
        Method::Bonferroni,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ctrl => "ctrl",
            Method::LineSearch => "line_search",
            Method::Oc => "oc",
            Method::Naive => "naive",
            Method::Bonferroni => "bonferroni",
        }
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, Method::Ctrl | Method::LineSearch | Method::Oc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ctrl" | "ctrl_ransac" => Ok(Method::Ctrl),
            "line_search" | "ls" => Ok(Method::LineSearch),
            "oc" => Ok(Method::Oc),
            "naive" => Ok(Method::Naive),
            "bonferroni" => Ok(Method::Bonferroni),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Everything needed to test one anomaly along its line.
#[derive(Debug, Clone)]
pub struct TestContext {
    pub anomaly: usize,
    pub eta: DVector<f64>,
    /// Line anchor: the nuisance component of the observed response.
    pub a: DVector<f64>,
    /// Line direction `Ση / (ηᵀΣη)`.
    pub b_dir: DVector<f64>,
    pub z_obs: f64,
    pub var: f64,
}

impl TestContext {
    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    /// `Y(z) = a + b·z`.
    pub fn response_at(&self, z: f64) -> DVector<f64> {
        &self.a + &self.b_dir * z
    }
}

/// Cached `(X_{-O})⁺` for building test directions of every detected anomaly.
#[derive(Debug, Clone)]
pub struct TestDirections {
    x: DMatrix<f64>,
    // p × n, columns of anomalies are zero
    inlier_pinv: DMatrix<f64>,
    is_anomaly: Vec<bool>,
}

impl TestDirections {
    pub fn new(x: &DMatrix<f64>, anomalies: &[usize]) -> Result<Self> {
        let n = x.nrows();
        let mut is_anomaly = vec![false; n];
        for &i in anomalies {
            if i >= n {
                return Err(Error::InvalidInput(format!("anomaly index {i} out of range")));
            }
            is_anomaly[i] = true;
        }
        if is_anomaly.iter().all(|&o| o) {
            return Err(Error::NoInliers);
        }
        let mut masked = x.clone();
        for (i, _) in is_anomaly.iter().enumerate().filter(|(_, &o)| o) {
            masked.row_mut(i).fill(0.0);
        }
        Ok(Self {
            x: x.clone(),
            inlier_pinv: pseudo_inverse(&masked)?,
            is_anomaly,
        })
    }

    /// `η_i = e_i − ((X_{-O})⁺)ᵀ X_i`.
    pub fn eta(&self, i: usize) -> Result<DVector<f64>> {
        if !self.is_anomaly.get(i).copied().unwrap_or(false) {
            return Err(Error::InvalidInput(format!("index {i} is not a detected anomaly")));
        }
        let xi = self.x.row(i).transpose();
        let mut eta = -(self.inlier_pinv.transpose() * xi);
        eta[i] += 1.0;
        Ok(eta)
    }
}

pub fn test_direction(x: &DMatrix<f64>, anomalies: &[usize], i: usize) -> Result<DVector<f64>> {
    TestDirections::new(x, anomalies)?.eta(i)
}

/// Decomposes the observed response into `a + b·z_obs` along `η`.
pub fn line_params(
    y_obs: &DVector<f64>,
    sigma: &NoiseCovariance,
    eta: &DVector<f64>,
) -> Result<TestContext> {
    let var = sigma.quad_form(eta);
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::DegenerateDirection { var });
    }
    let b_dir = sigma.apply(eta) / var;
    let z_obs = eta.dot(y_obs);
    let a = y_obs - &b_dir * z_obs;
    Ok(TestContext {
        anomaly: usize::MAX,
        eta: eta.clone(),
        a,
        b_dir,
        z_obs,
        var,
    })
}

fn region_contains_obs(region: &IntervalSet, z_obs: f64) -> bool {
    region.contains(z_obs) || region.distance_to(z_obs) <= 1e-9 * (1.0 + z_obs.abs())
}

/// `P(|Z| ≥ |z_obs| | Z ∈ region)` for `Z ~ N(0, var)`.
pub fn selective_p_value(z_obs: f64, var: f64, region: &IntervalSet) -> Result<f64> {
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::DegenerateDirection { var });
    }
    if !region_contains_obs(region, z_obs) {
        return Err(Error::RegionInconsistency {
            z_obs,
            region: region.clone(),
        });
    }
    let sd = var.sqrt();
    let ln_den = ln_gaussian_mass(region.intervals(), sd);
    if !(ln_den >= MIN_REGION_MASS.ln()) {
        return Err(Error::NumericMass {
            log_mass: ln_den,
            region: region.clone(),
        });
    }
    let t = z_obs.abs();
    let tails = IntervalSet::from_intervals(vec![
        Interval { lo: f64::NEG_INFINITY, hi: -t },
        Interval { lo: t, hi: f64::INFINITY },
    ]);
    let num_region = region.intersect(&tails);
    let ln_num = ln_gaussian_mass(num_region.intervals(), sd);
    Ok((ln_num - ln_den).exp().clamp(0.0, 1.0))
}

/// `2·P(N(0,1) ≥ |z_obs|/√var)`.
pub fn naive_p_value(z_obs: f64, var: f64) -> f64 {
    let t = z_obs.abs() / var.sqrt();
    (std::f64::consts::LN_2 + ln_norm_sf(t)).exp().min(1.0)
}

/// `min(1, 2ⁿ·p)`, evaluated in log space.
pub fn bonferroni_p_value(p_naive: f64, n: usize) -> f64 {
    if p_naive <= 0.0 {
        return 0.0;
    }
    let ln = n as f64 * std::f64::consts::LN_2 + p_naive.ln();
    if ln >= 0.0 {
        1.0
    } else {
        ln.exp()
    }
}

/// One p-value for one anomaly under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    pub anomaly_index: usize,
    pub method: Method,
    pub p_value: f64,
    pub z_obs: f64,
    pub var: f64,
    /// Truncation region; the whole line for unconditional methods.
    pub region: IntervalSet,
}
