//! Regions of `z` on which a model flags more than `k` of the first `j` points.
//!
//! `S[j][k]` obeys the recursion
//! `S[j][k] = (R_j ∩ S[j−1][k]) ∪ (R̄_j ∩ S[j−1][k−1])` with `S[j][k] = ∅` for
//! `j ≤ k` and `S[j][0] = R̄_j ∪ S[j−1][0]`. Two engines are provided: the full
//! table over interval sets, and a rolling evaluation on the cell lattice cut out
//! by the breakpoints of the row, which only keeps the columns needed for
//! `S[n][K−1]` and `S[n][K]`.

use crate::intervals::{Interval, IntervalSet};

/// Full table `S[j][k]` for `j ∈ 0..=n`, `k ∈ −1..=k_max`.
#[derive(Debug, Clone)]
pub struct CountRegionTable {
    n: usize,
    k_max: usize,
    // row-major, (n + 1) × (k_max + 2); column 0 is k = −1
    cells: Vec<IntervalSet>,
}

impl CountRegionTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `S[j][k]`; `k = −1` is the whole line.
    pub fn get(&self, j: usize, k: isize) -> &IntervalSet {
        assert!(j <= self.n && k >= -1 && k <= self.k_max as isize, "index out of table");
        &self.cells[j * (self.k_max + 2) + (k + 1) as usize]
    }

    /// `S[n][k]`: more than `k` of all `n` points are outliers.
    pub fn more_than(&self, k: isize) -> &IntervalSet {
        self.get(self.n, k)
    }
}

/// Builds the full table from one model's inlier regions.
pub fn dp_count_regions(row: &[IntervalSet], k_max: usize) -> CountRegionTable {
    let n = row.len();
    let width = k_max + 2;
    let mut cells = Vec::with_capacity((n + 1) * width);
    for _ in 0..=n {
        cells.push(IntervalSet::full());
        cells.extend((0..=k_max).map(|_| IntervalSet::empty()));
    }
    for j in 1..=n {
        let inlier = &row[j - 1];
        let outlier = inlier.complement();
        for k in 0..=k_max.min(j - 1) {
            let prev = |kk: usize| &cells[(j - 1) * width + kk];
            let value = if k == 0 {
                outlier.union(prev(1))
            } else {
                inlier.intersect(prev(k + 1)).union(&outlier.intersect(prev(k)))
            };
            cells[j * width + k + 1] = value;
        }
    }
    CountRegionTable { n, k_max, cells }
}

/// `S[n][k−1]` and `S[n][k]` for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTail {
    /// At least `k` outliers.
    pub at_least: IntervalSet,
    /// More than `k` outliers.
    pub more_than: IntervalSet,
}

impl CountTail {
    /// Exactly `k` outliers.
    pub fn exactly(&self) -> IntervalSet {
        self.at_least.subtract(&self.more_than)
    }
}

/// Sorted distinct finite endpoints of a family of sets. Cell `c` is the open
/// stretch between breakpoints `c − 1` and `c`; membership of every set is
/// constant on each cell.
struct Lattice {
    breaks: Vec<f64>,
    words: usize,
}

impl Lattice {
    fn new(row: &[IntervalSet]) -> Self {
        let mut breaks: Vec<f64> = row
            .iter()
            .flat_map(|s| s.intervals().iter().flat_map(|iv| [iv.lo, iv.hi]))
            .filter(|v| v.is_finite())
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let words = (breaks.len() + 1).div_ceil(64);
        Self { breaks, words }
    }

    fn cells(&self) -> usize {
        self.breaks.len() + 1
    }

    fn locate(&self, v: f64) -> usize {
        self.breaks
            .binary_search_by(|b| b.total_cmp(&v))
            .expect("endpoint is a breakpoint")
    }

    fn mask(&self, set: &IntervalSet) -> Vec<u64> {
        let mut bits = vec![0u64; self.words];
        for iv in set.intervals() {
            let first = if iv.lo == f64::NEG_INFINITY { 0 } else { self.locate(iv.lo) + 1 };
            let last = if iv.hi == f64::INFINITY { self.cells() - 1 } else { self.locate(iv.hi) };
            for c in first..=last {
                bits[c / 64] |= 1 << (c % 64);
            }
        }
        bits
    }

    fn valid(&self) -> Vec<u64> {
        let mut bits = vec![u64::MAX; self.words];
        let rem = self.cells() % 64;
        if rem != 0 {
            bits[self.words - 1] = (1u64 << rem) - 1;
        }
        bits
    }

    fn to_set(&self, bits: &[u64]) -> IntervalSet {
        let cells = self.cells();
        let bit = |c: usize| bits[c / 64] >> (c % 64) & 1 == 1;
        let mut pieces = Vec::new();
        let mut c = 0;
        while c < cells {
            if !bit(c) {
                c += 1;
                continue;
            }
            let start = c;
            while c < cells && bit(c) {
                c += 1;
            }
            pieces.push(Interval {
                lo: if start == 0 { f64::NEG_INFINITY } else { self.breaks[start - 1] },
                hi: if c == cells { f64::INFINITY } else { self.breaks[c - 1] },
            });
        }
        IntervalSet::from_intervals(pieces)
    }
}

/// `S[n][k−1]` and `S[n][k]` by the rolling recursion on bit-packed cells.
///
/// Only columns `k' ≥ k − 1 − (n − j)` can still reach the last two columns at
/// row `j`, so the work is `O(n · k · cells / 64)`.
pub fn count_tail(row: &[IntervalSet], k: usize) -> CountTail {
    assert!(k >= 1, "count tail needs k >= 1");
    let n = row.len();
    let lattice = Lattice::new(row);
    let valid = lattice.valid();
    let words = lattice.words;
    let mut cur = vec![vec![0u64; words]; k + 1];
    for (idx, region) in row.iter().enumerate() {
        let j = idx + 1;
        let inlier = lattice.mask(region);
        let outlier: Vec<u64> = inlier.iter().zip(&valid).map(|(a, v)| !a & v).collect();
        let lo = (k - 1).saturating_sub(n - j);
        let hi = k.min(j - 1);
        if lo > hi {
            continue;
        }
        for kk in (lo..=hi).rev() {
            if kk == 0 {
                for (w, o) in cur[0].iter_mut().zip(&outlier) {
                    *w |= o;
                }
            } else {
                let (below, above) = cur.split_at_mut(kk);
                let prev = &below[kk - 1];
                for w in 0..words {
                    above[0][w] = (inlier[w] & above[0][w]) | (outlier[w] & prev[w]);
                }
            }
        }
    }
    CountTail {
        at_least: lattice.to_set(&cur[k - 1]),
        more_than: lattice.to_set(&cur[k]),
    }
}
