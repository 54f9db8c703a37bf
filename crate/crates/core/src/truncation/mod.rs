//! Truncation regions for one tested anomaly along the line `Y(z) = a + b·z`.
//!
//! [`ResidualRegionTable`] holds, for every model `u` and point `i`, the set of `z`
//! where `i` is an inlier of `u`. Everything else is set algebra on that table:
//! the exact region through the count recursion, the over-conditioned cell, and
//! the line-search baseline which re-runs detection at each pivot.

mod dp;
mod line_search;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::TestContext;
use crate::intervals::{solve_quadratic_leq, Interval, IntervalSet, QuadCoeffs, QUAD_TOL};
use crate::linreg::SubsetFit;
use crate::par;
use crate::ransac::{anomalies_of, classify_with_fits};

pub use dp::{count_tail, dp_count_regions, CountRegionTable, CountTail};
pub use line_search::{line_search_region, LineSearchOptions};

/// How ties between models with equally large consensus sets are resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalityRule {
    /// The first model attaining the maximum is selected, as detection does.
    #[default]
    FirstEncountered,
    /// Model `b` must strictly beat every other model. Misses tie regions.
    Unique,
}

/// `R[u][i]`: the `z` for which point `i` is an inlier of model `u`.
#[derive(Debug, Clone)]
pub struct ResidualRegionTable {
    regions: Vec<Vec<IntervalSet>>,
}

impl ResidualRegionTable {
    /// Solves `(c_i + d_i z)² ≤ τ` for every model and point.
    pub fn build(
        x: &DMatrix<f64>,
        fits: &[SubsetFit],
        ctx: &TestContext,
        tau: f64,
    ) -> Result<Self> {
        let regions = par::map_slice(fits, |fit| {
            let line = fit.line_coeffs(x, &ctx.a, &ctx.b_dir);
            line.c
                .iter()
                .zip(line.d.iter())
                .map(|(&c, &d)| solve_quadratic_leq(QuadCoeffs::squared_residual(c, d, tau), QUAD_TOL))
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Self { regions })
    }

    pub fn from_regions(regions: Vec<Vec<IntervalSet>>) -> Self {
        Self { regions }
    }

    pub fn models(&self) -> usize {
        self.regions.len()
    }

    pub fn points(&self) -> usize {
        self.regions.first().map_or(0, Vec::len)
    }

    pub fn row(&self, u: usize) -> &[IntervalSet] {
        &self.regions[u]
    }

    pub fn get(&self, u: usize, i: usize) -> &IntervalSet {
        &self.regions[u][i]
    }

    /// The cell around `z` on which every model keeps the classification given
    /// by `inlier_sets`, or `None` when `z` is not consistent with it.
    pub fn trajectory_cell(&self, inlier_sets: &[Vec<usize>], z: f64) -> Option<Interval> {
        let n = self.points();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut mask = vec![false; n];
        for (row, inliers) in self.regions.iter().zip(inlier_sets) {
            mask.fill(false);
            for &i in inliers {
                mask[i] = true;
            }
            for (region, &inlier) in row.iter().zip(&mask) {
                let piece = if inlier {
                    region.component_containing(z)
                } else {
                    region.gap_containing(z)
                }?;
                lo = lo.max(piece.lo);
                hi = hi.min(piece.hi);
            }
        }
        Some(Interval { lo, hi })
    }
}

fn index_mask(n: usize, anomalies: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &i in anomalies {
        mask[i] = true;
    }
    mask
}

/// Where model `b` flags exactly the observed anomalies.
pub fn region_z2(b: usize, table: &ResidualRegionTable, anomalies: &[usize]) -> IntervalSet {
    let mask = index_mask(table.points(), anomalies);
    let mut acc = IntervalSet::full();
    for (region, &is_anomaly) in table.row(b).iter().zip(&mask) {
        acc = if is_anomaly {
            acc.subtract(region)
        } else {
            acc.intersect(region)
        };
        if acc.is_empty() {
            break;
        }
    }
    acc
}

/// Where model `b` is the selected model and flags exactly `k` points.
pub fn region_z1(b: usize, tails: &[CountTail], rule: OptimalityRule) -> IntervalSet {
    let mut acc = tails[b].exactly();
    for (u, tail) in tails.iter().enumerate() {
        if u == b || acc.is_empty() {
            continue;
        }
        let beats = match rule {
            OptimalityRule::FirstEncountered if u > b => &tail.at_least,
            _ => &tail.more_than,
        };
        acc = acc.intersect(beats);
    }
    acc
}

/// Count tails of every model for `k = |O_obs|`.
pub fn count_tails(table: &ResidualRegionTable, k: usize) -> Vec<CountTail> {
    par::map_range(table.models(), |u| count_tail(table.row(u), k))
}

/// The exact truncation region `{z : O(a + b·z) = O_obs}`.
///
/// Per model `b`, the optimality part uses prefix and suffix intersections of the
/// other models' count tails, so each `b` costs a constant number of set operations
/// beyond its own `z2`.
pub fn ctrl_ransac_region(
    table: &ResidualRegionTable,
    anomalies: &[usize],
    rule: OptimalityRule,
) -> Result<IntervalSet> {
    let k = anomalies.len();
    if k == 0 {
        return Err(Error::NoAnomalies);
    }
    if anomalies.iter().any(|&i| i >= table.points()) {
        return Err(Error::InvalidInput("anomaly index out of range".into()));
    }
    let models = table.models();
    let tails = count_tails(table, k);
    let (before, after) = match rule {
        OptimalityRule::FirstEncountered => (
            running_intersections(tails.iter().map(|t| &t.more_than)),
            running_intersections(tails.iter().rev().map(|t| &t.at_least)),
        ),
        OptimalityRule::Unique => (
            running_intersections(tails.iter().map(|t| &t.more_than)),
            running_intersections(tails.iter().rev().map(|t| &t.more_than)),
        ),
    };
    let pieces = par::map_range(models, |b| {
        let z2 = region_z2(b, table, anomalies);
        if z2.is_empty() {
            return z2;
        }
        let z1 = tails[b]
            .exactly()
            .intersect(&before[b])
            .intersect(&after[models - 1 - b]);
        z1.intersect(&z2)
    });
    let region = pieces
        .iter()
        .fold(IntervalSet::empty(), |acc, piece| acc.union(piece));
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(region)
}

// out[t] = intersection of the first t sets.
fn running_intersections<'a>(sets: impl Iterator<Item = &'a IntervalSet>) -> Vec<IntervalSet> {
    let mut out = vec![IntervalSet::full()];
    for s in sets {
        let next = out.last().expect("non-empty").intersect(s);
        out.push(next);
    }
    out
}

/// The over-conditioned cell: the component around `z_obs` on which every model
/// keeps its observed classification of every point.
pub fn oc_region(table: &ResidualRegionTable, observed_inlier_sets: &[Vec<usize>], z_obs: f64) -> IntervalSet {
    if let Some(cell) = table.trajectory_cell(observed_inlier_sets, z_obs) {
        return IntervalSet::single(cell.lo, cell.hi);
    }
    // `z_obs` sits on a boundary within rounding; take the nearest component of the
    // full trajectory event.
    let n = table.points();
    let mut acc = IntervalSet::full();
    for (u, inliers) in observed_inlier_sets.iter().enumerate() {
        let mask = index_mask(n, inliers);
        for (region, &inlier) in table.row(u).iter().zip(&mask) {
            acc = if inlier { acc.intersect(region) } else { acc.subtract(region) };
        }
    }
    acc.intervals()
        .iter()
        .min_by(|p, q| {
            let dp = IntervalSet::single(p.lo, p.hi).distance_to(z_obs);
            let dq = IntervalSet::single(q.lo, q.hi).distance_to(z_obs);
            dp.total_cmp(&dq)
        })
        .map_or_else(IntervalSet::empty, |iv| IntervalSet::single(iv.lo, iv.hi))
}

/// Default search window `[−20σ + min(0, z_obs), 20σ + max(0, z_obs)]`.
pub fn default_search_range(ctx: &TestContext) -> (f64, f64) {
    let half = 20.0 * ctx.sd();
    (-half + ctx.z_obs.min(0.0), half + ctx.z_obs.max(0.0))
}

/// Re-detects with fixed fits at evenly spaced `z` and reports whether the
/// anomaly set equals `anomalies`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_region_oracle(
    x: &DMatrix<f64>,
    fits: &[SubsetFit],
    tau: f64,
    anomalies: &[usize],
    ctx: &TestContext,
    z_min: f64,
    z_max: f64,
    grid_points: usize,
) -> Result<Vec<(f64, bool)>> {
    if grid_points < 2 || !(z_min < z_max) {
        return Err(Error::InvalidInput("oracle needs at least two grid points on a proper range".into()));
    }
    let n = x.nrows();
    let step = (z_max - z_min) / (grid_points - 1) as f64;
    Ok(par::map_range(grid_points, |g| {
        let z = if g + 1 == grid_points { z_max } else { z_min + step * g as f64 };
        let sets = classify_with_fits(x, &ctx.response_at(z), fits, tau);
        (z, anomalies_of(&sets, n) == anomalies)
    }))
}
