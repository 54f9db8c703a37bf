//! Finite unions of closed real intervals and a scalar quadratic inequality solver.
//!
//! Every region on the test-statistic line is an [`IntervalSet`]. Sets are kept in a
//! canonical form: sorted, pairwise disjoint, with gaps and widths above the merge
//! tolerance. Endpoints are treated as closed; boundary points carry no probability
//! mass so strict and non-strict inequalities are not distinguished.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when merging neighbouring intervals and dropping slivers.
pub const MERGE_TOL: f64 = 1e-10;

/// Default relative degeneracy threshold for [`solve_quadratic_leq`].
pub const QUAD_TOL: f64 = 1e-12;

/// A closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInput(format!("malformed interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub const fn full() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, z: f64) -> bool {
        self.lo <= z && z <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

fn gap_tol(a: f64, b: f64) -> f64 {
    let scale = [a, b]
        .iter()
        .filter(|v| v.is_finite())
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    MERGE_TOL * scale
}

/// Canonical finite union of disjoint closed intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self {
            intervals: vec![Interval::full()],
        }
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        Self::from_intervals(vec![Interval { lo, hi }])
    }

    /// Builds a canonical set from arbitrary (possibly overlapping, unsorted) pieces.
    /// Pieces with `lo > hi` or NaN endpoints are ignored.
    pub fn from_intervals(mut pieces: Vec<Interval>) -> Self {
        pieces.retain(|iv| !iv.lo.is_nan() && !iv.hi.is_nan() && iv.lo <= iv.hi);
        pieces.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        Self::from_sorted(pieces)
    }

    /// Canonicalizes pieces already sorted ascending by `lo`.
    fn from_sorted(pieces: Vec<Interval>) -> Self {
        let mut out: Vec<Interval> = Vec::with_capacity(pieces.len());
        for iv in pieces {
            match out.last_mut() {
                Some(last) if iv.lo - last.hi <= gap_tol(last.hi, iv.lo) => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => out.push(iv),
            }
        }
        out.retain(|iv| iv.width() > gap_tol(iv.lo, iv.hi));
        Self { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_full(&self) -> bool {
        matches!(self.intervals.as_slice(), [iv] if iv.lo == f64::NEG_INFINITY && iv.hi == f64::INFINITY)
    }

    pub fn contains(&self, z: f64) -> bool {
        // first interval with hi >= z
        let idx = self.intervals.partition_point(|iv| iv.hi < z);
        self.intervals.get(idx).is_some_and(|iv| iv.lo <= z)
    }

    /// The component containing `z`, if any.
    pub fn component_containing(&self, z: f64) -> Option<Interval> {
        let idx = self.intervals.partition_point(|iv| iv.hi < z);
        self.intervals.get(idx).filter(|iv| iv.lo <= z).copied()
    }

    /// The component of the complement containing `z`, as a closed interval
    /// between neighbouring pieces. `None` when `z` lies in the set.
    pub fn gap_containing(&self, z: f64) -> Option<Interval> {
        let idx = self.intervals.partition_point(|iv| iv.hi < z);
        if self.intervals.get(idx).is_some_and(|iv| iv.lo <= z) {
            return None;
        }
        let lo = if idx > 0 { self.intervals[idx - 1].hi } else { f64::NEG_INFINITY };
        let hi = self.intervals.get(idx).map_or(f64::INFINITY, |iv| iv.lo);
        Some(Interval { lo, hi })
    }

    /// Distance from `z` to the nearest point of the set (`inf` for the empty set).
    pub fn distance_to(&self, z: f64) -> f64 {
        self.intervals
            .iter()
            .map(|iv| {
                if iv.contains(z) {
                    0.0
                } else if z < iv.lo {
                    iv.lo - z
                } else {
                    z - iv.hi
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn union(&self, other: &Self) -> Self {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        let mut merged = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.intervals, &other.intervals);
        while i < a.len() || j < b.len() {
            let take_a = j >= b.len() || (i < a.len() && a[i].lo <= b[j].lo);
            if take_a {
                merged.push(a[i]);
                i += 1;
            } else {
                merged.push(b[j]);
                j += 1;
            }
        }
        Self::from_sorted(merged)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (a, b) = (&self.intervals, &other.intervals);
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo <= hi {
                out.push(Interval { lo, hi });
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_sorted(out)
    }

    pub fn complement(&self) -> Self {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut cursor = f64::NEG_INFINITY;
        for iv in &self.intervals {
            if iv.lo > cursor {
                out.push(Interval { lo: cursor, hi: iv.lo });
            }
            cursor = iv.hi;
        }
        if cursor < f64::INFINITY {
            out.push(Interval {
                lo: cursor,
                hi: f64::INFINITY,
            });
        }
        Self::from_sorted(out)
    }

    pub fn subtract(&self, other: &Self) -> Self {
        self.intersect(&other.complement())
    }

    /// Total Lebesgue length (may be infinite).
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::width).sum()
    }

    /// Compares two sets allowing endpoints to differ by `tol` and ignoring pieces
    /// narrower than `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let keep = |s: &Self| -> Vec<Interval> {
            s.intervals.iter().filter(|iv| iv.width() > tol).copied().collect()
        };
        let (a, b) = (keep(self), keep(other));
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                endpoint_close(x.lo, y.lo, tol) && endpoint_close(x.hi, y.hi, tol)
            })
    }
}

fn endpoint_close(x: f64, y: f64, tol: f64) -> bool {
    if x.is_infinite() || y.is_infinite() {
        return x == y;
    }
    (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()))
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "∅");
        }
        for (k, iv) in self.intervals.iter().enumerate() {
            if k > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        Self::from_intervals(iter.into_iter().collect())
    }
}

/// Coefficients of `w + r·z + o·z² ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCoeffs {
    pub w: f64,
    pub r: f64,
    pub o: f64,
}

impl QuadCoeffs {
    pub fn new(w: f64, r: f64, o: f64) -> Self {
        Self { w, r, o }
    }

    /// The inequality `(c + d·z)² ≤ tau`.
    pub fn squared_residual(c: f64, d: f64, tau: f64) -> Self {
        Self {
            w: c * c - tau,
            r: 2.0 * c * d,
            o: d * d,
        }
    }

    pub fn negate(self) -> Self {
        Self {
            w: -self.w,
            r: -self.r,
            o: -self.o,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.w + z * (self.r + z * self.o)
    }
}

/// Solves `w + r·z + o·z² ≤ 0` for `z`.
///
/// With `scale = max(|w|, |r|, |o|, 1)`, a quadratic coefficient `|o| ≤ tol·scale` is
/// treated as zero, and then a linear coefficient `|r| ≤ tol·scale` as well. Roots use
/// the cancellation-free `q = -(r + sign(r)·√disc)/2` form.
pub fn solve_quadratic_leq(q: QuadCoeffs, tol: f64) -> Result<IntervalSet> {
    let QuadCoeffs { w, r, o } = q;
    if !(w.is_finite() && r.is_finite() && o.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite quadratic coefficients (w={w}, r={r}, o={o})"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let scale = w.abs().max(r.abs()).max(o.abs()).max(1.0);
    let thresh = tol * scale;
    let neg = f64::NEG_INFINITY;
    let pos = f64::INFINITY;

    if o.abs() <= thresh {
        if r.abs() <= thresh {
            return Ok(if w <= 0.0 { IntervalSet::full() } else { IntervalSet::empty() });
        }
        let root = -w / r;
        return Ok(if r > 0.0 {
            IntervalSet::single(neg, root)
        } else {
            IntervalSet::single(root, pos)
        });
    }

    let disc = r * r - 4.0 * o * w;
    if disc < 0.0 {
        return Ok(if o > 0.0 { IntervalSet::empty() } else { IntervalSet::full() });
    }
    let sq = disc.sqrt();
    let qq = -0.5 * (r + r.signum() * sq);
    let (z1, z2) = if qq == 0.0 {
        (0.0, 0.0)
    } else {
        let a = qq / o;
        let b = w / qq;
        (a.min(b), a.max(b))
    };
    Ok(if o > 0.0 {
        IntervalSet::single(z1, z2)
    } else {
        IntervalSet::from_intervals(vec![Interval { lo: neg, hi: z1 }, Interval { lo: z2, hi: pos }])
    })
}
