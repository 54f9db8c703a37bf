//! Least-squares fits via the Moore–Penrose pseudo-inverse, and residuals that are
//! affine in the line parameter `z` when the response moves along `a + b·z`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff factor; the effective cutoff is
/// `PINV_RTOL · max(rows, cols) · σ_max`.
pub const PINV_RTOL: f64 = 1e-10;

/// How the noise covariance of `Y` is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// `σ²·I`.
    Scaled(f64),
    /// A full `n × n` symmetric positive semidefinite matrix.
    Dense(DMatrix<f64>),
    /// `σ̂²·I` with `σ̂²` estimated from the full least-squares residuals.
    Estimate,
}

impl Covariance {
    pub fn identity() -> Self {
        Covariance::Scaled(1.0)
    }

    /// `Σ_ij = ρ^|i−j|`.
    pub fn ar1(n: usize, rho: f64) -> Self {
        Covariance::Dense(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
    }
}

/// A covariance with every parameter known.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseCovariance {
    Scaled(f64),
    Dense(DMatrix<f64>),
}

impl NoiseCovariance {
    /// `Σ v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseCovariance::Scaled(s2) => v * *s2,
            NoiseCovariance::Dense(m) => m * v,
        }
    }

    /// `vᵀ Σ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        match self {
            NoiseCovariance::Scaled(s2) => s2 * v.norm_squared(),
            NoiseCovariance::Dense(m) => v.dot(&(m * v)),
        }
    }

    pub fn to_matrix(&self, n: usize) -> DMatrix<f64> {
        match self {
            NoiseCovariance::Scaled(s2) => DMatrix::identity(n, n) * *s2,
            NoiseCovariance::Dense(m) => m.clone(),
        }
    }
}

/// Regression data `Y ~ N(μ, Σ)` with a fixed design `X`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub sigma: Covariance,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma: Covariance) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("design must be non-empty, got {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("response of length {n}"),
                found: format!("length {}", y.len()),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design or response has non-finite entries".into()));
        }
        match &sigma {
            Covariance::Scaled(s2) if !(s2.is_finite() && *s2 > 0.0) => {
                return Err(Error::InvalidInput(format!("noise variance must be positive, got {s2}")));
            }
            Covariance::Dense(m) => {
                if m.shape() != (n, n) {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{n}x{n} covariance"),
                        found: format!("{}x{}", m.nrows(), m.ncols()),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("covariance has non-finite entries".into()));
                }
                let asym = (m - m.transpose()).amax();
                if asym > 1e-9 * m.amax().max(1.0) {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
                if m.diagonal().iter().any(|d| *d < 0.0) {
                    return Err(Error::InvalidInput("covariance has a negative diagonal entry".into()));
                }
            }
            _ => {}
        }
        Ok(Self { x, y, sigma })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Materializes the covariance, estimating `σ̂²` when requested.
    pub fn noise_covariance(&self) -> Result<NoiseCovariance> {
        match &self.sigma {
            Covariance::Scaled(s2) => Ok(NoiseCovariance::Scaled(*s2)),
            Covariance::Dense(m) => Ok(NoiseCovariance::Dense(m.clone())),
            Covariance::Estimate => {
                empirical_noise_variance(&self.x, &self.y).map(NoiseCovariance::Scaled)
            }
        }
    }
}

/// `σ̂² = RSS / (n − p)` from the full-data least-squares fit.
pub fn empirical_noise_variance(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "variance estimation needs n > p, got n={n}, p={p}"
        )));
    }
    let beta = fit_least_squares(x, y)?;
    let rss = (y - x * beta).norm_squared();
    let s2 = rss / (n - p) as f64;
    let scale = y.norm_squared() / n as f64;
    if s2 <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateVariance);
    }
    Ok(s2)
}

fn check_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Moore–Penrose pseudo-inverse through the SVD. Singular values below
/// `PINV_RTOL · max(m, p) · σ_max` are treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(a, "matrix")?;
    let (m, p) = a.shape();
    if m == 0 || p == 0 {
        return Ok(DMatrix::zeros(p, m));
    }
    let svd = a.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        unreachable!("svd computed with both factors requested")
    };
    let s = svd.singular_values;
    let cutoff = PINV_RTOL * m.max(p) as f64 * s.max();
    let mut out = DMatrix::zeros(p, m);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff && sk > 0.0 {
            out += (v_t.row(k).transpose() * u.column(k).transpose()) / sk;
        }
    }
    Ok(out)
}

/// Minimum-norm least-squares solution `X⁺ y`.
pub fn fit_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("cannot fit on zero rows".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: format!("response of length {}", x.nrows()),
            found: format!("length {}", y.len()),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("response has non-finite entries".into()));
    }
    Ok(pseudo_inverse(x)? * y)
}

/// Residuals `c + d·z` of the fit on rows `s` when the response is `a + b·z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearResidualCoeffs {
    pub c: DVector<f64>,
    pub d: DVector<f64>,
}

impl LinearResidualCoeffs {
    pub fn at(&self, z: f64) -> DVector<f64> {
        &self.c + &self.d * z
    }
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows.iter())
}

pub fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

/// A least-squares fit on a fixed row subset, with `(X_s)⁺` cached so residual
/// coefficients for many lines cost `O(n·p)` each.
#[derive(Debug, Clone)]
pub struct SubsetFit {
    rows: Vec<usize>,
    pinv: DMatrix<f64>,
}

impl SubsetFit {
    pub fn new(x: &DMatrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("row subset must be non-empty".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= x.nrows()) {
            return Err(Error::InvalidInput(format!(
                "row index {bad} out of range for {} rows",
                x.nrows()
            )));
        }
        Ok(Self {
            rows: rows.to_vec(),
            pinv: pseudo_inverse(&select_rows(x, rows))?,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.pinv * select_entries(y, &self.rows)
    }

    pub fn residuals(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        y - x * self.coefficients(y)
    }

    pub fn line_coeffs(
        &self,
        x: &DMatrix<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> LinearResidualCoeffs {
        LinearResidualCoeffs {
            c: self.residuals(x, a),
            d: self.residuals(x, b),
        }
    }
}

/// `c_i = a_i − X_iᵀ(X_s)⁺a_s`, `d_i = b_i − X_iᵀ(X_s)⁺b_s`.
pub fn residual_line_coeffs(
    x: &DMatrix<f64>,
    s: &[usize],
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<LinearResidualCoeffs> {
    let n = x.nrows();
    if a.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("line vectors of length {n}"),
            found: format!("{} and {}", a.len(), b.len()),
        });
    }
    Ok(SubsetFit::new(x, s)?.line_coeffs(x, a, b))
}
