//! Intraday seasonality: per-bin averages of queue volume and activity, and
//! the three-parameter fit
//!
//! ```text
//! vbar(b) ~= a0 + a1 ln b + a2 / (79 - b)^psi
//! ```
//!
//! over the 78 five-minute bins of a session. The fitted curve also provides
//! the smooth time derivative of vbar used by the rescaled drift correction;
//! finite differences of the raw profile are available as a fallback.

use crate::error::CoreError;
use crate::events::{QuoteEvent, BINS_PER_SESSION};
use crate::numerics::solve_dense;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Coefficients of the intraday volume fit, with per-coefficient standard
/// errors from the weighted linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Root mean squared residual in shares (unweighted).
    pub rmse: f64,
    /// Standard errors of (a0, a1, a2).
    pub se: [f64; 3],
}

/// Per-bin intraday averages plus the fitted profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayProfile {
    /// Average queue volume per bin (shares), length 78.
    pub vbar: Vec<f64>,
    /// Average number of orders per queue, when order counts are available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lbar: Option<Vec<f64>>,
    /// Average events per bin per session.
    pub nbar: Vec<f64>,
    pub fit: ProfileFit,
    /// Exponent of the end-of-day divergence; 1 unless overridden.
    pub psi: f64,
}

impl IntradayProfile {
    /// Constant profile, used by synthetic generators and tests.
    pub fn flat(vbar: f64, nbar: f64) -> Self {
        let n = BINS_PER_SESSION as usize;
        IntradayProfile {
            vbar: vec![vbar; n],
            lbar: None,
            nbar: vec![nbar; n],
            fit: ProfileFit {
                a0: vbar,
                a1: 0.0,
                a2: 0.0,
                rmse: 0.0,
                se: [0.0; 3],
            },
            psi: 1.0,
        }
    }

    /// Profile evaluated from an exact coefficient triple; used to drive the
    /// synthetic generator with a known seasonal shape.
    pub fn from_coefficients(a0: f64, a1: f64, a2: f64, nbar: f64) -> Self {
        let n = BINS_PER_SESSION as usize;
        let vbar: Vec<f64> = (1..=n)
            .map(|b| a0 + a1 * (b as f64).ln() + a2 / (79.0 - b as f64))
            .collect();
        IntradayProfile {
            vbar,
            lbar: None,
            nbar: vec![nbar; n],
            fit: ProfileFit {
                a0,
                a1,
                a2,
                rmse: 0.0,
                se: [0.0; 3],
            },
            psi: 1.0,
        }
    }

    pub fn vbar_at(&self, bin: u32) -> Result<f64> {
        if !(1..=BINS_PER_SESSION).contains(&bin) {
            return Err(CoreError::config(format!("bin {bin} outside 1..=78")));
        }
        Ok(self.vbar[(bin - 1) as usize])
    }

    pub fn nbar_at(&self, bin: u32) -> Result<f64> {
        if !(1..=BINS_PER_SESSION).contains(&bin) {
            return Err(CoreError::config(format!("bin {bin} outside 1..=78")));
        }
        Ok(self.nbar[(bin - 1) as usize])
    }

    /// Fitted curve at bin b.
    pub fn fit_value(&self, bin: u32) -> f64 {
        let b = bin as f64;
        self.fit.a0 + self.fit.a1 * b.ln() + self.fit.a2 / (79.0 - b).powf(self.psi)
    }

    /// d vbar / d bin from the fitted form.
    pub fn fit_derivative(&self, bin: u32) -> f64 {
        let b = bin as f64;
        self.fit.a1 / b + self.psi * self.fit.a2 / (79.0 - b).powf(self.psi + 1.0)
    }
}

/// Gap handling for bins without events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPolicy {
    Error,
    Interpolate,
}

/// Compute per-bin averages over classified events pooled across sessions.
/// `sessions` divides the event counts into per-session activity.
pub fn compute_profile(
    events: &[QuoteEvent],
    sessions: u64,
    gaps: GapPolicy,
) -> Result<IntradayProfile> {
    if events.is_empty() {
        return Err(CoreError::data("no events to profile"));
    }
    if sessions == 0 {
        return Err(CoreError::config("sessions must be positive"));
    }
    let n = BINS_PER_SESSION as usize;
    let mut sum = vec![0.0f64; n];
    let mut cnt = vec![0u64; n];
    for ev in events {
        let i = (ev.bin - 1) as usize;
        sum[i] += 0.5 * (ev.pre.0 as f64 + ev.pre.1 as f64);
        cnt[i] += 1;
    }
    let missing: Vec<usize> = (0..n).filter(|&i| cnt[i] == 0).collect();
    if !missing.is_empty() && gaps == GapPolicy::Error {
        let bins: Vec<String> = missing.iter().map(|i| (i + 1).to_string()).collect();
        return Err(CoreError::data(format!(
            "empty intraday bins: {}",
            bins.join(",")
        )));
    }
    let mut vbar: Vec<f64> = (0..n)
        .map(|i| {
            if cnt[i] > 0 {
                sum[i] / cnt[i] as f64
            } else {
                f64::NAN
            }
        })
        .collect();
    if !missing.is_empty() {
        interpolate_gaps(&mut vbar);
    }
    let nbar: Vec<f64> = cnt.iter().map(|&c| c as f64 / sessions as f64).collect();
    let fit = fit_profile(&vbar)?;
    Ok(IntradayProfile {
        vbar,
        lbar: None,
        nbar,
        fit,
        psi: 1.0,
    })
}

fn interpolate_gaps(v: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        if v[i].is_nan() {
            let left = (0..i).rev().find(|&j| !v[j].is_nan());
            let right = (i + 1..n).find(|&j| !v[j].is_nan());
            v[i] = match (left, right) {
                (Some(l), Some(r)) => {
                    let t = (i - l) as f64 / (r - l) as f64;
                    v[l] + t * (v[r] - v[l])
                }
                (Some(l), None) => v[l],
                (None, Some(r)) => v[r],
                (None, None) => f64::NAN,
            };
        }
    }
}

/// Weighted linear least squares for vbar(b) ~= a0 + a1 ln b + a2/(79-b).
///
/// The model is linear in the coefficients, so the solve is exact. Weights
/// 1/vbar^2 reflect the multiplicative noise of per-bin volume averages;
/// they do not affect a noiseless fit.
pub fn fit_profile(vbar: &[f64]) -> Result<ProfileFit> {
    fit_profile_psi(vbar, 1.0)
}

/// Same fit with a configurable end-of-day divergence exponent.
pub fn fit_profile_psi(vbar: &[f64], psi: f64) -> Result<ProfileFit> {
    let n = vbar.len();
    if n < 3 {
        return Err(CoreError::data(
            "profile fit needs at least 3 bins (rank-deficient design)",
        ));
    }
    for (i, v) in vbar.iter().enumerate() {
        if !v.is_finite() || *v <= 0.0 {
            return Err(CoreError::data(format!(
                "vbar({}) = {v} must be finite and positive",
                i + 1
            )));
        }
    }
    let rows: Vec<[f64; 3]> = (1..=n)
        .map(|b| {
            let bf = b as f64;
            [1.0, bf.ln(), (n as f64 + 1.0 - bf).powf(psi).recip()]
        })
        .collect();
    let mut xtwx = vec![vec![0.0; 3]; 3];
    let mut xtwy = vec![0.0; 3];
    for (row, &y) in rows.iter().zip(vbar) {
        let w = 1.0 / (y * y);
        for a in 0..3 {
            for b in 0..3 {
                xtwx[a][b] += w * row[a] * row[b];
            }
            xtwy[a] += w * row[a] * y;
        }
    }
    let design = xtwx.clone();
    let beta =
        solve_dense(xtwx, xtwy).map_err(|_| CoreError::data("rank-deficient profile design"))?;
    let mut wrss = 0.0;
    let mut rss = 0.0;
    for (row, &y) in rows.iter().zip(vbar) {
        let fitv = beta[0] * row[0] + beta[1] * row[1] + beta[2] * row[2];
        let r = y - fitv;
        rss += r * r;
        wrss += r * r / (y * y);
    }
    let dof = (n - 3) as f64;
    let sigma2 = if dof > 0.0 { wrss / dof } else { 0.0 };
    // standard errors from the inverse weighted normal matrix
    let mut se = [0.0f64; 3];
    for (j, s) in se.iter_mut().enumerate() {
        let mut e = vec![0.0; 3];
        e[j] = 1.0;
        let col = solve_dense(design.clone(), e)
            .map_err(|_| CoreError::data("singular profile design"))?;
        *s = (sigma2 * col[j]).max(0.0).sqrt();
    }
    Ok(ProfileFit {
        a0: beta[0],
        a1: beta[1],
        a2: beta[2],
        rmse: (rss / n as f64).sqrt(),
        se,
    })
}

/// Two-sided 97.5% quantile of Student's t with 75 degrees of freedom
/// (78 bins minus 3 fitted coefficients), for profile-fit confidence
/// intervals.
pub const T_975_DF75: f64 = 1.9921;

/// d vbar / d event at bin b: the fitted (or finite-difference) per-bin
/// derivative divided by the events per bin.
pub fn vbar_derivative(profile: &IntradayProfile, bin: u32, from_fit: bool) -> Result<f64> {
    let nbar = profile.nbar_at(bin)?;
    if nbar <= 0.0 {
        return Err(CoreError::data(format!(
            "nbar({bin}) = {nbar}; cannot convert to per-event units"
        )));
    }
    let per_bin = if from_fit {
        profile.fit_derivative(bin)
    } else {
        let i = (bin - 1) as usize;
        let v = &profile.vbar;
        if i == 0 {
            v[1] - v[0]
        } else if i == v.len() - 1 {
            v[i] - v[i - 1]
        } else {
            0.5 * (v[i + 1] - v[i - 1])
        }
    };
    Ok(per_bin / nbar)
}
