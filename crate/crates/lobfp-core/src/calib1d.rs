//! One-dimensional calibration: drift f(x), diffusion d(x), jump
//! probabilities pi0/q+/q-, replacement densities P+/P-, and the refill
//! probability pi+, all estimated by binned conditional moments over
//! rescaled events. Both book sides feed the same grids; each event
//! contributes the pre-event volume of the side it touched.
//!
//! Estimation state lives in a mergeable accumulator of plain sums, so
//! calibration over many instrument-days can run chunked in parallel and
//! still reproduce the single-pass result exactly when folded in order.

use crate::error::CoreError;
use crate::events::{rescale, EventKind, QuoteEvent, Side};
use crate::grid::Grid1D;
use crate::seasonality::{vbar_derivative, IntradayProfile};
use crate::stats::{autocorr_lag1, hill_tail_index, Moments};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Binning and reporting thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibConfig {
    pub bins: usize,
    pub x_max: f64,
    /// Minimum samples before a bin estimate is reported.
    pub min_count: u64,
    /// Minimum jump samples before a replacement density is reported.
    pub min_density_count: u64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig {
            bins: 50,
            x_max: 5.0,
            min_count: 100,
            min_density_count: 100,
        }
    }
}

/// Mergeable calibration state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calib1DAccum {
    cfg: CalibConfig,
    edges: Vec<f64>,
    /// Moments of rescaled dv per bin, volume-change events only.
    dv: Vec<Moments>,
    /// Event counts per bin: [volume change, overtaken, recede, refill].
    kinds: Vec<[u64; 4]>,
    /// Histogram of replacement volumes at improved/refilled quotes.
    plus_hist: Vec<u64>,
    /// Histogram of promoted second-best volumes.
    minus_hist: Vec<u64>,
    n_refill: u64,
    n_recede: u64,
    overflow: u64,
}

impl Calib1DAccum {
    pub fn new(cfg: CalibConfig) -> Self {
        let grid = Grid1D::uniform(cfg.bins, 0.0, cfg.x_max);
        Calib1DAccum {
            edges: grid.edges.clone(),
            dv: vec![Moments::default(); cfg.bins],
            kinds: vec![[0; 4]; cfg.bins],
            plus_hist: vec![0; cfg.bins],
            minus_hist: vec![0; cfg.bins],
            n_refill: 0,
            n_recede: 0,
            overflow: 0,
            cfg,
        }
    }

    fn grid(&self) -> Grid1D {
        Grid1D {
            edges: self.edges.clone(),
            values: vec![None; self.cfg.bins],
            counts: vec![0; self.cfg.bins],
            overflow: self.overflow,
        }
    }

    fn bin_of(&self, x: f64) -> Option<usize> {
        let g = Grid1D {
            edges: self.edges.clone(),
            values: vec![],
            counts: vec![],
            overflow: 0,
        };
        g.bin_of(x)
    }

    /// Fold one event into the state.
    pub fn add(&mut self, ev: &QuoteEvent, profile: &IntradayProfile) -> Result<()> {
        let (state, dv) = rescale(ev, profile)?;
        let x = match ev.side {
            Side::Bid => state.x,
            Side::Ask => state.y,
        };
        let bin = match self.bin_of(x) {
            Some(b) => b,
            None => return Ok(()),
        };
        if x >= self.cfg.x_max {
            self.overflow += 1;
        }
        let vbar = profile.vbar_at(ev.bin)?;
        match ev.kind {
            EventKind::VolumeChange => {
                self.kinds[bin][0] += 1;
                if let Some(d) = dv {
                    self.dv[bin].push(d);
                }
            }
            EventKind::Overtaken => {
                self.kinds[bin][1] += 1;
                let xr = ev.new_best_vol as f64 / vbar;
                if let Some(b) = self.bin_of(xr) {
                    self.plus_hist[b] += 1;
                }
            }
            EventKind::DepletedRecede => {
                self.kinds[bin][2] += 1;
                self.n_recede += 1;
                let xr = ev.new_best_vol as f64 / vbar;
                if let Some(b) = self.bin_of(xr) {
                    self.minus_hist[b] += 1;
                }
            }
            EventKind::DepletedRefill => {
                self.kinds[bin][3] += 1;
                self.n_refill += 1;
                let xr = ev.new_best_vol as f64 / vbar;
                if let Some(b) = self.bin_of(xr) {
                    self.plus_hist[b] += 1;
                }
            }
        }
        Ok(())
    }

    /// Merge another accumulator; the grids must match.
    pub fn merge(&mut self, other: &Calib1DAccum) -> Result<()> {
        if self.edges != other.edges {
            return Err(CoreError::config("accumulator grids differ"));
        }
        for (a, b) in self.dv.iter_mut().zip(&other.dv) {
            a.merge(b);
        }
        for (a, b) in self.kinds.iter_mut().zip(&other.kinds) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.plus_hist.iter_mut().zip(&other.plus_hist) {
            *a += b;
        }
        for (a, b) in self.minus_hist.iter_mut().zip(&other.minus_hist) {
            *a += b;
        }
        self.n_refill += other.n_refill;
        self.n_recede += other.n_recede;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn event_count(&self) -> u64 {
        self.kinds.iter().map(|k| k.iter().sum::<u64>()).sum()
    }

    /// Produce the calibration estimates.
    pub fn finalize(&self) -> Result<Calib1D> {
        if self.event_count() == 0 {
            return Err(CoreError::data("no events to calibrate"));
        }
        let mc = self.cfg.min_count;
        let mut f = self.grid();
        let mut d = self.grid();
        let mut pi0 = self.grid();
        let mut qplus = self.grid();
        let mut qminus = self.grid();
        for b in 0..self.cfg.bins {
            let m = &self.dv[b];
            f.counts[b] = m.n;
            d.counts[b] = m.n;
            if m.n >= mc {
                f.values[b] = m.mean();
                d.values[b] = m.mean_sq().map(|s| 0.5 * s);
            }
            let k = self.kinds[b];
            let tot = k.iter().sum::<u64>();
            pi0.counts[b] = tot;
            qplus.counts[b] = tot;
            qminus.counts[b] = tot;
            if tot >= mc {
                let t = tot as f64;
                pi0.values[b] = Some(k[0] as f64 / t);
                qplus.values[b] = Some(k[1] as f64 / t);
                qminus.values[b] = Some((k[2] + k[3]) as f64 / t);
            }
        }
        let pplus = density_from_hist(&self.grid(), &self.plus_hist);
        let pminus = density_from_hist(&self.grid(), &self.minus_hist);
        let n_depleted = self.n_refill + self.n_recede;
        let pi_plus = (n_depleted > 0).then(|| self.n_refill as f64 / n_depleted as f64);
        // per-bin refill fraction, a diagnostic for the pooled-scalar
        // treatment of pi+
        let mut refill_fraction = self.grid();
        for b in 0..self.cfg.bins {
            let dep = self.kinds[b][2] + self.kinds[b][3];
            refill_fraction.counts[b] = dep;
            if dep >= mc {
                refill_fraction.values[b] = Some(self.kinds[b][3] as f64 / dep as f64);
            }
        }
        Ok(Calib1D {
            f,
            d,
            pi0,
            qplus,
            qminus,
            pplus,
            pminus,
            pi_plus,
            n_depleted,
            refill_fraction,
        })
    }
}

fn density_from_hist(grid: &Grid1D, hist: &[u64]) -> Grid1D {
    let mut g = grid.clone();
    let total: u64 = hist.iter().sum();
    for b in 0..g.bins() {
        g.counts[b] = hist[b];
        if total > 0 {
            g.values[b] = Some(hist[b] as f64 / total as f64 / g.width(b));
        }
    }
    g
}

/// Calibrated one-dimensional model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calib1D {
    /// Drift per event, conditional on no price change.
    pub f: Grid1D,
    /// Half mean squared change per event, same conditioning.
    pub d: Grid1D,
    /// Probability an event leaves the best price unchanged.
    pub pi0: Grid1D,
    /// Per-event probability of being overtaken.
    pub qplus: Grid1D,
    /// Per-event probability of depletion (recede or refill).
    pub qminus: Grid1D,
    /// Replacement density at improved/refilled quotes, integrates to 1.
    pub pplus: Grid1D,
    /// Replacement density of promoted second-best queues.
    pub pminus: Grid1D,
    /// Refill probability after depletion; undefined without depletions.
    pub pi_plus: Option<f64>,
    pub n_depleted: u64,
    /// Per-bin refill fraction (diagnostic; pi+ is treated as a scalar).
    pub refill_fraction: Grid1D,
}

impl Calib1D {
    pub fn pi_minus(&self) -> Option<f64> {
        self.pi_plus.map(|p| 1.0 - p)
    }
}

/// Fixed accumulation chunk. Partitioning never depends on the job count,
/// so any `--jobs` setting folds the same chunk sums in the same order and
/// the result is bit-identical.
const CHUNK: usize = 1 << 16;

/// Calibration over a slice of events (single-threaded).
pub fn calibrate(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &CalibConfig,
) -> Result<Calib1D> {
    let mut total = Calib1DAccum::new(cfg.clone());
    for evs in events.chunks(CHUNK) {
        let mut acc = Calib1DAccum::new(cfg.clone());
        for ev in evs {
            acc.add(ev, profile)?;
        }
        total.merge(&acc)?;
    }
    total.finalize()
}

/// Chunked parallel calibration; identical output to [`calibrate`] for any
/// job count.
pub fn calibrate_parallel(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &CalibConfig,
    jobs: usize,
) -> Result<Calib1D> {
    if jobs <= 1 {
        return calibrate(events, profile, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CoreError::config(format!("thread pool: {e}")))?;
    let partials: Vec<Result<Calib1DAccum>> = pool.install(|| {
        events
            .par_chunks(CHUNK)
            .map(|evs| {
                let mut acc = Calib1DAccum::new(cfg.clone());
                for ev in evs {
                    acc.add(ev, profile)?;
                }
                Ok(acc)
            })
            .collect()
    });
    let mut total = Calib1DAccum::new(cfg.clone());
    for part in partials {
        total.merge(&part?)?;
    }
    total.finalize()
}

/// Estimate drift and diffusion grids only.
pub fn estimate_fd(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &CalibConfig,
) -> Result<(Grid1D, Grid1D)> {
    let c = calibrate(events, profile, cfg)?;
    Ok((c.f, c.d))
}

/// Estimate jump probabilities and the pooled refill probability.
pub fn estimate_jumps(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &CalibConfig,
) -> Result<(Grid1D, Grid1D, Grid1D, Option<f64>)> {
    let c = calibrate(events, profile, cfg)?;
    Ok((c.pi0, c.qplus, c.qminus, c.pi_plus))
}

/// Estimate the replacement densities; errors when the jump sample is too
/// small to say anything.
pub fn estimate_replacement_densities(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &CalibConfig,
) -> Result<(Grid1D, Grid1D)> {
    let c = calibrate(events, profile, cfg)?;
    let n_plus: u64 = c.pplus.counts.iter().sum();
    let n_minus: u64 = c.pminus.counts.iter().sum();
    if n_plus < cfg.min_density_count || n_minus < cfg.min_density_count {
        return Err(CoreError::data(format!(
            "replacement samples too small: {n_plus} plus, {n_minus} minus \
             (need {})",
            cfg.min_density_count
        )));
    }
    Ok((c.pplus, c.pminus))
}

/// Unconditional coefficients at intraday bin `b`:
/// f~(x) = pi0(x) f(x) - x (dvbar/dt)/vbar and d~(x) = pi0(x) d(x).
pub fn tilde(calib: &Calib1D, profile: &IntradayProfile, bin: u32) -> Result<(Grid1D, Grid1D)> {
    if !calib.f.same_edges(&calib.pi0) || !calib.d.same_edges(&calib.pi0) {
        return Err(CoreError::config("f, d, pi0 must share a grid"));
    }
    let dv_per_event = vbar_derivative(profile, bin, true)?;
    let vbar = profile.vbar_at(bin)?;
    let mut ft = calib.f.clone();
    let mut dt = calib.d.clone();
    for b in 0..ft.bins() {
        let x = ft.center(b);
        ft.values[b] = match (calib.pi0.values[b], calib.f.values[b]) {
            (Some(p), Some(f)) => Some(p * f - x * dv_per_event / vbar),
            _ => None,
        };
        dt.values[b] = match (calib.pi0.values[b], calib.d.values[b]) {
            (Some(p), Some(d)) => Some(p * d),
            _ => None,
        };
    }
    Ok((ft, dt))
}

/// Gaussian-kernel smoothing of a grid for plotting; inference always uses
/// the raw bins.
pub fn kernel_smooth(grid: &Grid1D, bandwidth: f64) -> Grid1D {
    let mut out = grid.clone();
    let pts: Vec<(f64, f64)> = grid.defined().collect();
    if pts.is_empty() {
        return out;
    }
    for b in 0..grid.bins() {
        let x0 = grid.center(b);
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, v) in &pts {
            let u = (x - x0) / bandwidth;
            let w = (-0.5 * u * u).exp();
            num += w * v;
            den += w;
        }
        out.values[b] = Some(num / den);
    }
    out
}

/// Diagnostics the calibration reports but does not act on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibDiagnostics {
    /// Lag-1 autocorrelation of rescaled dv (Markovianity check).
    pub dv_autocorr_lag1: Option<f64>,
    /// Hill tail index of |dv| (finite-second-moment check).
    pub dv_tail_index: Option<f64>,
}

pub fn diagnostics(events: &[QuoteEvent], profile: &IntradayProfile) -> Result<CalibDiagnostics> {
    let mut dvs = Vec::new();
    for ev in events {
        if ev.kind == EventKind::VolumeChange {
            if let (_, Some(dv)) = rescale(ev, profile)? {
                dvs.push(dv);
            }
        }
    }
    let k = (dvs.len() / 100).clamp(2, 5000);
    Ok(CalibDiagnostics {
        dv_autocorr_lag1: autocorr_lag1(&dvs),
        dv_tail_index: hill_tail_index(&dvs, k),
    })
}
