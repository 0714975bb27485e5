//! Small statistical helpers: mergeable moment accumulators, KS distance,
//! and tail/correlation diagnostics.

use serde::{Deserialize, Serialize};

/// Sum-based first/second moment accumulator. Counts merge exactly; sums
/// merge by addition, so a fixed partition folded in a fixed order gives a
/// bit-reproducible result regardless of how many threads ran the chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    pub fn mean_sq(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_sq / self.n as f64)
    }

    /// Population variance.
    pub fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        Some((self.sum_sq / self.n as f64 - m * m).max(0.0))
    }

    /// Standard error of the mean.
    pub fn se_mean(&self) -> Option<f64> {
        let v = self.variance()?;
        (self.n > 1).then(|| (v / self.n as f64).sqrt())
    }
}

/// Kolmogorov-Smirnov distance between a sorted sample and a reference CDF
/// given as (abscissa, cdf) pairs with cdf nondecreasing to 1.
pub fn ks_sample_vs_cdf(sorted_sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted_sample.len();
    if n == 0 {
        return 1.0;
    }
    let mut d: f64 = 0.0;
    for (i, &x) in sorted_sample.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// KS distance between two piecewise-constant densities sharing `edges`
/// (values are cell masses summing to ~1).
pub fn ks_between_masses(mass_a: &[f64], mass_b: &[f64]) -> f64 {
    debug_assert_eq!(mass_a.len(), mass_b.len());
    let (mut ca, mut cb, mut d) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in mass_a.iter().zip(mass_b) {
        ca += a;
        cb += b;
        d = d.max((ca - cb).abs());
    }
    d
}

/// Hill estimator of the tail index from the top `k` order statistics of
/// |values|. Reported as a diagnostic for heavy-tailed volume changes.
pub fn hill_tail_index(values: &[f64], k: usize) -> Option<f64> {
    let mut mags: Vec<f64> = values
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .collect();
    if mags.len() < k + 1 || k < 2 {
        return None;
    }
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let x_k = mags[k];
    let s: f64 = mags[..k].iter().map(|x| (x / x_k).ln()).sum();
    (s > 0.0).then(|| k as f64 / s)
}

/// Lag-1 autocorrelation of a series.
pub fn autocorr_lag1(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 3 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    if var == 0.0 {
        return Some(0.0);
    }
    let cov: f64 = series
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    Some(cov / var)
}

/// Standard error of a binomial proportion estimate.
pub fn binomial_se(p_hat: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}
