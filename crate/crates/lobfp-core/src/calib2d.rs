//! Two-dimensional calibration over the joint state (x, y) = rescaled
//! (bid, ask) volumes: drift components, diffusions, the bid/ask
//! cross-covariance of volume changes, bid-side jump probabilities
//! conditioned on the opposite queue, joint replacement densities, and the
//! empirical stationary occupancy.
//!
//! Conventions: each event touches one side with probability 1/2, so the
//! drift component is half the conditional mean (ask events contribute
//! zero to the bid component) and the diffusion is a quarter of the
//! conditional second moment. The cross-covariance is measured over
//! adjacent-event windows because simultaneous bid/ask changes do not
//! occur in event time.

use crate::error::CoreError;
use crate::events::{rescale, EventKind, QuoteEvent, Side};
use crate::grid::Grid2D;
use crate::seasonality::IntradayProfile;
use crate::stats::Moments;
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calib2DConfig {
    pub nx: usize,
    pub ny: usize,
    pub x_max: f64,
    pub y_max: f64,
    pub min_count: u64,
    /// Adjacent-event window length for the cross-covariance.
    pub window: usize,
}

impl Default for Calib2DConfig {
    fn default() -> Self {
        Calib2DConfig {
            nx: 32,
            ny: 32,
            x_max: 4.0,
            y_max: 4.0,
            min_count: 100,
            window: 2,
        }
    }
}

/// Mergeable 2D calibration state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calib2DAccum {
    cfg: Calib2DConfig,
    /// Per cell, over volume-change events: bid contribution (dv or 0).
    dv_b: Vec<Moments>,
    /// Per cell: ask contribution.
    dv_a: Vec<Moments>,
    /// Per cell: all-event count and bid-side jump counts.
    n_all: Vec<u64>,
    n_b_plus: Vec<u64>,
    n_b_minus: Vec<u64>,
    /// Joint replacement histograms (bid-side events).
    plus_hist: Vec<u64>,
    minus_hist: Vec<u64>,
    /// Occupancy of pre-states.
    occupancy: Vec<u64>,
    /// Cross products over adjacent windows.
    prod: Vec<Moments>,
    wa: Vec<Moments>,
    wb: Vec<Moments>,
    /// Window assembly state (not merged across chunk boundaries).
    #[serde(skip)]
    win: WindowState,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct WindowState {
    filled: usize,
    cell: Option<(usize, usize)>,
    sum_b: f64,
    sum_a: f64,
}

impl Calib2DAccum {
    pub fn new(cfg: Calib2DConfig) -> Self {
        let n = cfg.nx * cfg.ny;
        Calib2DAccum {
            dv_b: vec![Moments::default(); n],
            dv_a: vec![Moments::default(); n],
            n_all: vec![0; n],
            n_b_plus: vec![0; n],
            n_b_minus: vec![0; n],
            plus_hist: vec![0; n],
            minus_hist: vec![0; n],
            occupancy: vec![0; n],
            prod: vec![Moments::default(); n],
            wa: vec![Moments::default(); n],
            wb: vec![Moments::default(); n],
            win: WindowState::default(),
            cfg,
        }
    }

    fn template(&self) -> Grid2D {
        Grid2D::uniform(self.cfg.nx, self.cfg.ny, self.cfg.x_max, self.cfg.y_max)
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        self.template().cell_of(x, y)
    }

    pub fn add(&mut self, ev: &QuoteEvent, profile: &IntradayProfile) -> Result<()> {
        let (state, dv) = rescale(ev, profile)?;
        let cell = match self.cell_of(state.x, state.y) {
            Some(c) => c,
            None => return Ok(()),
        };
        let k = cell.0 * self.cfg.ny + cell.1;
        self.n_all[k] += 1;
        self.occupancy[k] += 1;
        let vbar = profile.vbar_at(ev.bin)?;
        match ev.kind {
            EventKind::VolumeChange => {
                let d = dv.unwrap_or(0.0);
                let (b, a) = match ev.side {
                    Side::Bid => (d, 0.0),
                    Side::Ask => (0.0, d),
                };
                self.dv_b[k].push(b);
                self.dv_a[k].push(a);
                // cross-covariance window assembly
                if self.win.filled == 0 {
                    self.win.cell = Some(cell);
                    self.win.sum_b = 0.0;
                    self.win.sum_a = 0.0;
                }
                self.win.sum_b += b;
                self.win.sum_a += a;
                self.win.filled += 1;
                if self.win.filled == self.cfg.window {
                    if let Some((ci, cj)) = self.win.cell {
                        let kk = ci * self.cfg.ny + cj;
                        self.prod[kk].push(self.win.sum_b * self.win.sum_a);
                        self.wb[kk].push(self.win.sum_b);
                        self.wa[kk].push(self.win.sum_a);
                    }
                    self.win = WindowState::default();
                }
            }
            EventKind::Overtaken | EventKind::DepletedRecede | EventKind::DepletedRefill => {
                // a jump interrupts the volume-change window
                self.win = WindowState::default();
                if ev.side == Side::Bid {
                    let post = (ev.post.0 as f64 / vbar, ev.post.1 as f64 / vbar);
                    match ev.kind {
                        EventKind::Overtaken => {
                            self.n_b_plus[k] += 1;
                            if let Some((i, j)) = self.cell_of(post.0, post.1) {
                                self.plus_hist[i * self.cfg.ny + j] += 1;
                            }
                        }
                        EventKind::DepletedRefill => {
                            self.n_b_minus[k] += 1;
                            if let Some((i, j)) = self.cell_of(post.0, post.1) {
                                self.plus_hist[i * self.cfg.ny + j] += 1;
                            }
                        }
                        _ => {
                            self.n_b_minus[k] += 1;
                            if let Some((i, j)) = self.cell_of(post.0, post.1) {
                                self.minus_hist[i * self.cfg.ny + j] += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Calib2DAccum) -> Result<()> {
        if self.cfg != other.cfg {
            return Err(CoreError::config("2D accumulator grids differ"));
        }
        let zip2 = |a: &mut Vec<Moments>, b: &Vec<Moments>| {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        };
        zip2(&mut self.dv_b, &other.dv_b);
        zip2(&mut self.dv_a, &other.dv_a);
        zip2(&mut self.prod, &other.prod);
        zip2(&mut self.wa, &other.wa);
        zip2(&mut self.wb, &other.wb);
        let zipu = |a: &mut Vec<u64>, b: &Vec<u64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        zipu(&mut self.n_all, &other.n_all);
        zipu(&mut self.n_b_plus, &other.n_b_plus);
        zipu(&mut self.n_b_minus, &other.n_b_minus);
        zipu(&mut self.plus_hist, &other.plus_hist);
        zipu(&mut self.minus_hist, &other.minus_hist);
        zipu(&mut self.occupancy, &other.occupancy);
        Ok(())
    }

    pub fn finalize(&self) -> Result<Calib2D> {
        let total: u64 = self.n_all.iter().sum();
        if total == 0 {
            return Err(CoreError::data("no events to calibrate"));
        }
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mc = self.cfg.min_count;
        let mut fx = self.template();
        let mut fy = self.template();
        let mut dx = self.template();
        let mut dy = self.template();
        let mut fx_se = self.template();
        let mut fy_se = self.template();
        let mut rho = self.template();
        let mut rho_se = self.template();
        let mut qp = self.template();
        let mut qm = self.template();
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                // The unconditional per-event moments divide by the count of
                // all events at the cell: volume changes on the other side
                // and jump events contribute zero to this side's component.
                // Normalizing by volume changes alone would leak the
                // opposite queue's jump frequencies into the estimate.
                let n_all = self.n_all[k];
                let mb = &self.dv_b[k];
                fx.counts[i][j] = n_all;
                dx.counts[i][j] = n_all;
                fy.counts[i][j] = n_all;
                dy.counts[i][j] = n_all;
                fx_se.counts[i][j] = n_all;
                fy_se.counts[i][j] = n_all;
                if n_all >= mc {
                    let nf = n_all as f64;
                    let with_zeros = |m: &Moments| -> (f64, f64, f64) {
                        let mean = m.sum / nf;
                        let var = (m.sum_sq / nf - mean * mean).max(0.0);
                        (mean, m.sum_sq / nf, (var / nf).sqrt())
                    };
                    let (bm, bsq, bse) = with_zeros(mb);
                    fx.values[i][j] = Some(bm);
                    dx.values[i][j] = Some(0.5 * bsq);
                    fx_se.values[i][j] = Some(bse);
                    let (am, asq, ase) = with_zeros(&self.dv_a[k]);
                    fy.values[i][j] = Some(am);
                    dy.values[i][j] = Some(0.5 * asq);
                    fy_se.values[i][j] = Some(ase);
                }
                let pm = &self.prod[k];
                rho.counts[i][j] = pm.n;
                rho_se.counts[i][j] = pm.n;
                if pm.n >= mc {
                    let cov = pm.mean().unwrap()
                        - self.wb[k].mean().unwrap() * self.wa[k].mean().unwrap();
                    rho.values[i][j] = Some(cov);
                    rho_se.values[i][j] = pm.se_mean();
                }
                let n = self.n_all[k];
                qp.counts[i][j] = n;
                qm.counts[i][j] = n;
                if n >= mc {
                    qp.values[i][j] = Some(self.n_b_plus[k] as f64 / n as f64);
                    qm.values[i][j] = Some(self.n_b_minus[k] as f64 / n as f64);
                }
            }
        }
        let density = |hist: &[u64]| -> Grid2D {
            let mut g = self.template();
            let tot: u64 = hist.iter().sum();
            for i in 0..nx {
                for j in 0..ny {
                    let k = i * ny + j;
                    g.counts[i][j] = hist[k];
                    if tot > 0 {
                        g.values[i][j] = Some(hist[k] as f64 / tot as f64 / g.cell_area(i, j));
                    }
                }
            }
            g
        };
        let pplus = density(&self.plus_hist);
        let pminus = density(&self.minus_hist);
        let pst = density(&self.occupancy);
        Ok(Calib2D {
            fx,
            fy,
            dx,
            dy,
            fx_se,
            fy_se,
            rho_ab: rho,
            rho_ab_se: rho_se,
            qplus_xy: qp,
            qminus_xy: qm,
            pplus_xy: pplus,
            pminus_xy: pminus,
            pst_xy: pst,
        })
    }
}

/// Calibrated two-dimensional quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calib2D {
    /// Bid drift component per event (half conditional mean).
    pub fx: Grid2D,
    pub fy: Grid2D,
    /// Diffusions (quarter conditional second moment).
    pub dx: Grid2D,
    pub dy: Grid2D,
    /// Standard errors of fx, fy.
    pub fx_se: Grid2D,
    pub fy_se: Grid2D,
    /// Cross-covariance of bid/ask changes over adjacent-event windows.
    pub rho_ab: Grid2D,
    pub rho_ab_se: Grid2D,
    /// Bid-side jump probabilities conditioned on the joint state.
    pub qplus_xy: Grid2D,
    pub qminus_xy: Grid2D,
    /// Joint replacement densities (integrate to 1 over the plane).
    pub pplus_xy: Grid2D,
    pub pminus_xy: Grid2D,
    /// Empirical stationary occupancy (integrates to 1).
    pub pst_xy: Grid2D,
}

const CHUNK: usize = 1 << 16;

/// Estimate all 2D quantities in one pass.
pub fn estimate_2d(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &Calib2DConfig,
) -> Result<Calib2D> {
    let mut total = Calib2DAccum::new(cfg.clone());
    for evs in events.chunks(CHUNK) {
        let mut acc = Calib2DAccum::new(cfg.clone());
        for ev in evs {
            acc.add(ev, profile)?;
        }
        total.merge(&acc)?;
    }
    total.finalize()
}

/// Parallel variant; identical output to [`estimate_2d`] for any job count.
pub fn estimate_2d_parallel(
    events: &[QuoteEvent],
    profile: &IntradayProfile,
    cfg: &Calib2DConfig,
    jobs: usize,
) -> Result<Calib2D> {
    if jobs <= 1 {
        return estimate_2d(events, profile, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CoreError::config(format!("thread pool: {e}")))?;
    let partials: Vec<Result<Calib2DAccum>> = pool.install(|| {
        events
            .par_chunks(CHUNK)
            .map(|evs| {
                let mut acc = Calib2DAccum::new(cfg.clone());
                for ev in evs {
                    acc.add(ev, profile)?;
                }
                Ok(acc)
            })
            .collect()
    });
    let mut total = Calib2DAccum::new(cfg.clone());
    for part in partials {
        total.merge(&part?)?;
    }
    total.finalize()
}
