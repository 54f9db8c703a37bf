//! End-to-end inference: detect anomalies once, then compute a p-value for each
//! detected anomaly under each requested method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    bonferroni_p_value, line_params, naive_p_value, selective_p_value, Method, PValueReport,
    TestContext, TestDirections,
};
use crate::intervals::IntervalSet;
use crate::linreg::{Dataset, NoiseCovariance, SubsetFit};
use crate::par;
use crate::ransac::{detect, DetectionResult, RansacConfig};
use crate::truncation::{
    ctrl_ransac_region, line_search_region, oc_region, LineSearchOptions, OptimalityRule,
    ResidualRegionTable,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub rule: OptimalityRule,
    /// Line-search window; defaults to ±20 standard deviations around zero and `z_obs`.
    pub z_range: Option<(f64, f64)>,
    pub max_steps: usize,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            rule: OptimalityRule::default(),
            z_range: None,
            max_steps: LineSearchOptions::DEFAULT_MAX_STEPS,
        }
    }
}

impl TestOptions {
    fn line_search(&self, ctx: &TestContext) -> LineSearchOptions {
        let mut opts = LineSearchOptions::around(ctx);
        if let Some((lo, hi)) = self.z_range {
            opts.z_min = lo;
            opts.z_max = hi;
        }
        opts.max_steps = self.max_steps;
        opts
    }
}

/// A completed detection together with everything needed to test its anomalies.
#[derive(Debug, Clone)]
pub struct Analysis {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma: NoiseCovariance,
    tau: f64,
    detection: DetectionResult,
    fits: Vec<SubsetFit>,
    directions: Option<TestDirections>,
}

impl Analysis {
    pub fn run(data: &Dataset, cfg: &RansacConfig) -> Result<Self> {
        let sigma = data.noise_covariance()?;
        let detection = detect(data, cfg)?;
        let fits = detection.plan.fits(&data.x)?;
        let directions = if detection.anomalies.is_empty() || detection.no_inliers {
            None
        } else {
            Some(TestDirections::new(&data.x, &detection.anomalies)?)
        };
        Ok(Self {
            x: data.x.clone(),
            y: data.y.clone(),
            sigma,
            tau: cfg.tau,
            detection,
            fits,
            directions,
        })
    }

    pub fn detection(&self) -> &DetectionResult {
        &self.detection
    }

    pub fn anomalies(&self) -> &[usize] {
        &self.detection.anomalies
    }

    pub fn noise_covariance(&self) -> &NoiseCovariance {
        &self.sigma
    }

    /// Line parameters for testing anomaly `i`.
    pub fn context(&self, i: usize) -> Result<TestContext> {
        if self.detection.anomalies.is_empty() {
            return Err(Error::NoAnomalies);
        }
        let directions = self.directions.as_ref().ok_or(Error::NoInliers)?;
        let eta = directions.eta(i)?;
        let mut ctx = line_params(&self.y, &self.sigma, &eta)?;
        ctx.anomaly = i;
        Ok(ctx)
    }

    pub fn table(&self, ctx: &TestContext) -> Result<ResidualRegionTable> {
        ResidualRegionTable::build(&self.x, &self.fits, ctx, self.tau)
    }

    /// Truncation region of a conditional method; the whole line otherwise.
    pub fn region(
        &self,
        method: Method,
        ctx: &TestContext,
        table: &ResidualRegionTable,
        opts: &TestOptions,
    ) -> Result<IntervalSet> {
        let anomalies = &self.detection.anomalies;
        match method {
            Method::Ctrl => ctrl_ransac_region(table, anomalies, opts.rule),
            Method::LineSearch => line_search_region(
                &self.x,
                &self.fits,
                self.tau,
                table,
                anomalies,
                ctx,
                &opts.line_search(ctx),
            ),
            Method::Oc => Ok(oc_region(table, &self.detection.inlier_sets, ctx.z_obs)),
            Method::Naive | Method::Bonferroni => Ok(IntervalSet::full()),
        }
    }

    /// P-value of one anomaly under one method, reusing a prepared table.
    pub fn p_value(
        &self,
        method: Method,
        ctx: &TestContext,
        table: &ResidualRegionTable,
        opts: &TestOptions,
    ) -> Result<PValueReport> {
        let region = self.region(method, ctx, table, opts)?;
        let p_value = match method {
            Method::Naive => naive_p_value(ctx.z_obs, ctx.var),
            Method::Bonferroni => bonferroni_p_value(naive_p_value(ctx.z_obs, ctx.var), self.x.nrows()),
            _ => selective_p_value(ctx.z_obs, ctx.var, &region)?,
        };
        Ok(PValueReport {
            anomaly_index: ctx.anomaly,
            method,
            p_value,
            z_obs: ctx.z_obs,
            var: ctx.var,
            region,
        })
    }

    /// Reports for anomaly `i` under each method, in the order given.
    pub fn test(&self, i: usize, methods: &[Method], opts: &TestOptions) -> Result<Vec<PValueReport>> {
        let ctx = self.context(i)?;
        let table = if methods.iter().any(|m| m.is_conditional()) {
            self.table(&ctx)?
        } else {
            ResidualRegionTable::from_regions(Vec::new())
        };
        methods
            .iter()
            .map(|&m| self.p_value(m, &ctx, &table, opts))
            .collect()
    }

    /// Reports for every detected anomaly, anomaly-major. Empty when nothing was detected.
    pub fn test_all(&self, methods: &[Method], opts: &TestOptions) -> Result<Vec<PValueReport>> {
        if self.detection.anomalies.is_empty() {
            return Ok(Vec::new());
        }
        let per_anomaly = par::map_slice(&self.detection.anomalies, |&i| self.test(i, methods, opts));
        let mut out = Vec::with_capacity(per_anomaly.len() * methods.len());
        for reports in per_anomaly {
            out.extend(reports?);
        }
        Ok(out)
    }
}
