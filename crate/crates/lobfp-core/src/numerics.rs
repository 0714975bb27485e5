//! Small dense/banded linear algebra kernels and special functions.
//!
//! Everything here is deterministic and allocation-simple; problem sizes are
//! a few thousand unknowns at most.

use crate::error::CoreError;
use crate::Result;

/// Solve a tridiagonal system in place (Thomas algorithm).
/// `lower[i]` multiplies x[i-1] in row i, `upper[i]` multiplies x[i+1].
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < f64::MIN_POSITIVE {
        return Err(CoreError::numerical("tridiagonal pivot underflow at row 0"));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(CoreError::numerical(format!(
                "tridiagonal pivot underflow at row {i}"
            )));
        }
        c[i] = upper[i] / piv;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Dense LU with partial pivoting; solves A x = b, consuming A.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n);
    for k in 0..n {
        let mut p = k;
        let mut best = a[k][k].abs();
        for r in k + 1..n {
            let v = a[r][k].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best < 1e-300 {
            return Err(CoreError::numerical(format!(
                "singular matrix at elimination step {k}"
            )));
        }
        if p != k {
            a.swap(k, p);
            b.swap(k, p);
        }
        let pivot = a[k][k];
        for r in k + 1..n {
            let f = a[r][k] / pivot;
            if f == 0.0 {
                continue;
            }
            a[r][k] = 0.0;
            for c in k + 1..n {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}

/// Symmetric positive-definite banded matrix stored as `n x (bw + 1)` rows:
/// `band[i][k]` holds A[i][i + k] for k = 0..=bw (upper band, row-wise).
pub struct BandedSpd {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    /// Accumulate into A[i][j] (only the upper triangle is stored).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if j >= i { (i, j) } else { (j, i) };
        let k = c - r;
        assert!(k <= self.bw, "entry outside band");
        self.band[r * (self.bw + 1) + k] += v;
    }

    /// In-place banded Cholesky factorization (A = L L^T).
    pub fn cholesky(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for j in 0..n {
            let mut d = self.band[j * w];
            let k0 = j.saturating_sub(bw);
            for k in k0..j {
                let l = self.band[k * w + (j - k)];
                d -= l * l;
            }
            if d <= 0.0 {
                return Err(CoreError::numerical(format!(
                    "banded Cholesky breakdown at column {j}"
                )));
            }
            let d = d.sqrt();
            self.band[j * w] = d;
            let top = (j + bw + 1).min(n);
            for i in j + 1..top {
                let mut s = self.band[j * w + (i - j)];
                let k0 = i.saturating_sub(bw).max(k0);
                for k in k0..j {
                    s -= self.band[k * w + (i - k)] * self.band[k * w + (j - k)];
                }
                self.band[j * w + (i - j)] = s / d;
            }
        }
        Ok(())
    }

    /// Solve L L^T x = b after `cholesky()`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let mut s = y[i];
            for k in k0..i {
                s -= self.band[k * w + (i - k)] * y[k];
            }
            y[i] = s / self.band[i * w];
        }
        for i in (0..n).rev() {
            let top = (i + bw + 1).min(n);
            let mut s = y[i];
            for k in i + 1..top {
                s -= self.band[i * w + (k - i)] * y[k];
            }
            y[i] = s / self.band[i * w];
        }
        y
    }
}

/// General banded matrix with LU factorization without pivoting; intended
/// for diagonally dominant systems (discrete generators and backward
/// operators), where elimination without pivoting is stable.
pub struct BandedLu {
    n: usize,
    bw: usize,
    /// Row-major bands: data[i][k] holds A[i][i - bw + k], k = 0..=2*bw.
    data: Vec<f64>,
}

impl BandedLu {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedLu {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.bw >= i, "entry outside band");
        let k = (j + self.bw) - i;
        assert!(k <= 2 * self.bw, "entry outside band");
        self.data[i * (2 * self.bw + 1) + k] += v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let piv = self.data[k * w + bw];
            if piv.abs() < 1e-300 {
                return Err(CoreError::numerical(format!(
                    "banded LU pivot underflow at row {k}"
                )));
            }
            let top = (k + bw + 1).min(n);
            for i in k + 1..top {
                // column k sits at offset (k + bw - i) in row i
                let off = k + bw - i;
                let l = self.data[i * w + off] / piv;
                self.data[i * w + off] = l;
                if l != 0.0 {
                    for j in k + 1..(k + bw + 1).min(n) {
                        let a = self.data[k * w + (j + bw - k)];
                        if a != 0.0 {
                            self.data[i * w + (j + bw - i)] -= l * a;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.data[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for k in i + 1..hi {
                s -= self.data[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / self.data[i * w + bw];
        }
        x
    }
}

/// Error function, Abramowitz & Stegun 7.1.26 refined with a two-term
/// correction; absolute error below 1.5e-7 which is ample for the truncated
/// normal mass computations here.
pub fn erf(x: f64) -> f64 {
    // rational approximation on |x|, odd extension
    let s = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    s * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Cumulative trapezoid integral of `g` sampled at `xs` (same length),
/// starting at 0.
pub fn cumtrapz(xs: &[f64], g: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), g.len());
    let mut out = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        out[i] = out[i - 1] + 0.5 * (g[i] + g[i - 1]) * (xs[i] - xs[i - 1]);
    }
    out
}

/// Finite and strictly positive; the guard used on diffusion coefficients
/// and step sizes, where NaN must be rejected along with nonpositives.
pub fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// FNV-1a 64-bit hash of a byte stream; used for input digests and config
/// hashes in run manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
