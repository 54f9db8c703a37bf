//! Standard normal tail probabilities in log space and a few calibration helpers.

use libm::erfc;

use crate::intervals::Interval;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Past this many standard deviations the upper tail is evaluated through the
/// continued fraction for the Mills ratio instead of `erfc`.
pub const TAIL_SWITCH: f64 = 6.0;

/// `ln P(N(0,1) ≥ x)`.
pub fn ln_norm_sf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x > TAIL_SWITCH {
        ln_upper_tail(x)
    } else if x < -TAIL_SWITCH {
        (-ln_upper_tail(-x).exp()).ln_1p()
    } else {
        (0.5 * erfc(x / std::f64::consts::SQRT_2)).ln()
    }
}

/// `P(N(0,1) ≥ x)`.
pub fn norm_sf(x: f64) -> f64 {
    ln_norm_sf(x).exp()
}

// ln φ(x) − ln t, where 1/t is the Mills ratio evaluated by backward recursion of
// 1/(x + 1/(x + 2/(x + 3/(x + …)))).
fn ln_upper_tail(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=80).rev() {
        t = x + k as f64 / t;
    }
    -0.5 * x * x - LN_SQRT_2PI - t.ln()
}

/// `ln P(lo ≤ N(0,1) ≤ hi)` for standardized endpoints.
pub fn ln_norm_interval_mass(lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        let a = ln_norm_sf(lo);
        let b = ln_norm_sf(hi);
        if a == f64::NEG_INFINITY {
            return a;
        }
        a + (-(b - a).exp_m1()).ln()
    } else if hi <= 0.0 {
        ln_norm_interval_mass(-hi, -lo)
    } else {
        let outside = norm_sf(hi) + norm_sf(-lo);
        (-outside).ln_1p()
    }
}

/// Log of the total N(0, var) mass of a union of disjoint intervals, accumulated
/// with a max-shifted compensated sum.
pub fn ln_gaussian_mass<'a, I>(pieces: I, sd: f64) -> f64
where
    I: IntoIterator<Item = &'a Interval>,
{
    let logs: Vec<f64> = pieces
        .into_iter()
        .map(|iv| ln_norm_interval_mass(iv.lo / sd, iv.hi / sd))
        .filter(|l| *l > f64::NEG_INFINITY)
        .collect();
    let Some(max) = logs.iter().copied().reduce(f64::max) else {
        return f64::NEG_INFINITY;
    };
    max + neumaier_sum(logs.iter().map(|l| (l - max).exp())).ln()
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
///
/// Returns `(D, p)` with the asymptotic Kolmogorov p-value (Stephens' small-sample
/// correction applied to the argument).
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let x = x.clamp(0.0, 1.0);
            let above = (k + 1) as f64 / nf - x;
            let below = x - k as f64 / nf;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_sf(lambda))
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Normal-approximation 95% band `α ± 1.96·√(α(1−α)/m)` for a rejection rate.
pub fn binomial_band(alpha: f64, m: usize) -> (f64, f64) {
    let half = 1.96 * (alpha * (1.0 - alpha) / m as f64).sqrt();
    ((alpha - half).max(0.0), (alpha + half).min(1.0))
}

/// Binomial standard error of an observed proportion.
pub fn binomial_se(rate: f64, m: usize) -> f64 {
    if m == 0 {
        return f64::INFINITY;
    }
    (rate * (1.0 - rate) / m as f64).sqrt()
}
