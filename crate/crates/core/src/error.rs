use thiserror::Error;

use crate::intervals::IntervalSet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("every point was flagged as an anomaly; no inliers remain to fit the null model")]
    NoInliers,

    #[error("no anomalies were detected; there is nothing to test")]
    NoAnomalies,

    #[error("test direction has non-positive variance {var}")]
    DegenerateDirection { var: f64 },

    #[error("estimated noise variance is zero (perfect fit)")]
    DegenerateVariance,

    #[error("observed statistic {z_obs} lies outside its truncation region {region}")]
    RegionInconsistency { z_obs: f64, region: IntervalSet },

    #[error("truncation region is empty although it must contain the observation")]
    EmptyRegion,

    #[error("Gaussian mass of truncation region underflowed (log mass {log_mass:.3}, region {region})")]
    NumericMass { log_mass: f64, region: IntervalSet },

    #[error("line search stopped after {steps} steps at z = {reached}")]
    TruncatedSearch {
        steps: usize,
        reached: f64,
        partial: IntervalSet,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by malformed input rather than by numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::Csv(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
