//! Baseline: walk the line cell by cell, conditioning on the whole trajectory at
//! each pivot and keeping cells whose anomaly set matches the observed one.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ResidualRegionTable;
use crate::error::{Error, Result};
use crate::inference::TestContext;
use crate::intervals::{Interval, IntervalSet};
use crate::linreg::SubsetFit;
use crate::ransac::{anomalies_of, classify_with_fits};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchOptions {
    pub z_min: f64,
    pub z_max: f64,
    pub max_steps: usize,
}

impl LineSearchOptions {
    pub const DEFAULT_MAX_STEPS: usize = 100_000;

    pub fn around(ctx: &TestContext) -> Self {
        let (z_min, z_max) = super::default_search_range(ctx);
        Self {
            z_min,
            z_max,
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }
}

fn step_past(z: f64) -> f64 {
    z + 1e-9 * (1.0 + z.abs())
}

/// Union of trajectory cells in `[z_min, z_max]` whose detected anomaly set equals
/// `anomalies`.
///
/// At each pivot the response `a + b·z` is re-classified by every fitted model;
/// the cell is the intersection of the solution components containing the pivot,
/// taken from `table`. A pivot that rounding places on the wrong side of a
/// boundary is nudged forward.
pub fn line_search_region(
    x: &DMatrix<f64>,
    fits: &[SubsetFit],
    tau: f64,
    table: &ResidualRegionTable,
    anomalies: &[usize],
    ctx: &TestContext,
    opts: &LineSearchOptions,
) -> Result<IntervalSet> {
    if !(opts.z_min < ctx.z_obs && ctx.z_obs < opts.z_max) {
        return Err(Error::InvalidInput(format!(
            "search range [{}, {}] must contain z_obs = {}",
            opts.z_min, opts.z_max, ctx.z_obs
        )));
    }
    let n = x.nrows();
    let window = IntervalSet::single(opts.z_min, opts.z_max);
    let mut kept: Vec<Interval> = Vec::new();
    let mut z = opts.z_min;
    let mut steps = 0;
    while z < opts.z_max {
        if steps == opts.max_steps {
            return Err(Error::TruncatedSearch {
                steps,
                reached: z,
                partial: IntervalSet::from_intervals(kept).intersect(&window),
            });
        }
        steps += 1;
        let inlier_sets = classify_with_fits(x, &ctx.response_at(z), fits, tau);
        let Some(cell) = table.trajectory_cell(&inlier_sets, z) else {
            z = step_past(z);
            continue;
        };
        if anomalies_of(&inlier_sets, n) == anomalies {
            kept.push(cell);
        }
        z = step_past(cell.hi.max(z));
    }
    Ok(IntervalSet::from_intervals(kept).intersect(&window))
}
