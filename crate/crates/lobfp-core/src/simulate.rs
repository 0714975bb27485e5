//! Jump-diffusion Monte Carlo for the rescaled queue dynamics: Euler steps
//! between price events, Bernoulli jump hazards per step, first-passage
//! estimation, and long-run occupancy recording.
//!
//! Two modes. In stopping mode the path runs the conditional dynamics
//! dx = f dt + sqrt(2 d) dW until a price-changing hazard fires (or the
//! queue empties / the horizon expires). In free-running mode jump events
//! redraw the state from the replacement law and the path continues with
//! the unconditional (tilde) coefficients, so its occupancy converges to
//! the stationary solution of the full evolution equation.
//!
//! Every path derives its random stream from (seed, path index), and
//! estimates are reduced in path order, so results are bit-identical for
//! any thread count.

use crate::error::CoreError;
use crate::model::{ModelSpec1D, ModelSpec2D};
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Everything a path can end on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    QueueEmpty,
    PriceUp,
    PriceDown,
    /// Absorbed at x_max (only when the upper boundary is absorbing).
    UpperEdge,
    Horizon,
    BidUp,
    BidDown,
    AskUp,
    AskDown,
}

/// Stop conditions for 1D paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopSet {
    pub queue_empty: bool,
    pub price_up: bool,
    pub price_down: bool,
}

impl Default for StopSet {
    fn default() -> Self {
        StopSet {
            queue_empty: true,
            price_up: true,
            price_down: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: f64,
    /// Requested step; reduced automatically so max hazard * dt <= 0.1.
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub stops: StopSet,
    /// Jump events redraw the state and the path continues.
    pub free_running: bool,
    /// In stopping mode, resolve depletions that refill (probability pi+)
    /// by continuing instead of stopping with a price move.
    pub refill_continues: bool,
    /// Absorb at x_max instead of reflecting.
    pub upper_absorbing: bool,
    /// Queue-empty threshold.
    pub eps: f64,
    pub jobs: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            x0: 1.0,
            dt: 0.1,
            horizon: 1e6,
            n_paths: 1,
            seed: 1,
            stops: StopSet::default(),
            free_running: false,
            refill_continues: false,
            upper_absorbing: false,
            eps: 1e-3,
            jobs: 1,
        }
    }
}

/// Estimate for one outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutcomeStat {
    pub p: f64,
    /// Binomial standard error of p.
    pub se: f64,
    pub count: u64,
    pub mean_time: f64,
    pub time_q10: f64,
    pub time_q50: f64,
    pub time_q90: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassageEstimate {
    pub outcomes: BTreeMap<Outcome, OutcomeStat>,
    pub n_paths: u64,
    pub dt_used: f64,
    /// Coefficient lookups clamped to the domain.
    pub clamped: u64,
}

impl PassageEstimate {
    pub fn probability(&self, o: Outcome) -> f64 {
        self.outcomes.get(&o).map(|s| s.p).unwrap_or(0.0)
    }

    pub fn stat(&self, o: Outcome) -> Option<&OutcomeStat> {
        self.outcomes.get(&o)
    }
}

/// Occupancy histogram of a free-running path, as cell masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Occupancy {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

fn reduce_dt(requested: f64, max_hazard: f64) -> f64 {
    if max_hazard <= 0.0 {
        return requested;
    }
    requested.min(0.1 / max_hazard)
}

fn max_hazard_1d(spec: &ModelSpec1D) -> f64 {
    let n = 512;
    (0..=n)
        .map(|i| {
            let x = spec.x_max * i as f64 / n as f64;
            spec.q_plus_at(x) + spec.q_minus_at(x)
        })
        .fold(0.0, f64::max)
}

struct PathResult {
    outcome: Outcome,
    time: f64,
    clamped: u64,
}

fn assemble(results: Vec<PathResult>, dt_used: f64) -> PassageEstimate {
    let n = results.len() as u64;
    let mut times: BTreeMap<Outcome, Vec<f64>> = BTreeMap::new();
    let mut clamped = 0;
    for r in &results {
        times.entry(r.outcome).or_default().push(r.time);
        clamped += r.clamped;
    }
    let mut outcomes = BTreeMap::new();
    for (o, mut ts) in times {
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let count = ts.len() as u64;
        let p = count as f64 / n as f64;
        let q = |f: f64| ts[((f * (count as f64 - 1.0)).round() as usize).min(ts.len() - 1)];
        outcomes.insert(
            o,
            OutcomeStat {
                p,
                se: crate::stats::binomial_se(p, n),
                count,
                mean_time: ts.iter().sum::<f64>() / count as f64,
                time_q10: q(0.10),
                time_q50: q(0.50),
                time_q90: q(0.90),
            },
        );
    }
    PassageEstimate {
        outcomes,
        n_paths: n,
        dt_used,
        clamped,
    }
}

fn run_paths<F>(n_paths: u64, seed: u64, jobs: usize, body: F) -> Result<Vec<PathResult>>
where
    F: Fn(&mut ChaCha8Rng, u64) -> Result<PathResult> + Sync,
{
    let run_one = |path: u64| -> Result<PathResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path + 1);
        body(&mut rng, path)
    };
    if jobs <= 1 {
        (0..n_paths).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CoreError::config(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_paths).into_par_iter().map(run_one).collect())
    }
}

/// First-passage simulation of the 1D model.
pub fn simulate_paths(spec: &ModelSpec1D, cfg: &SimConfig) -> Result<PassageEstimate> {
    spec.validate()?;
    if cfg.n_paths == 0 || !crate::numerics::positive(cfg.dt) {
        return Err(CoreError::config("n_paths >= 1 and dt > 0 required"));
    }
    let dt = reduce_dt(cfg.dt, max_hazard_1d(spec));
    let results = run_paths(cfg.n_paths, cfg.seed, cfg.jobs, |rng, path| {
        simulate_one_1d(spec, cfg, dt, rng)
            .map_err(|e| CoreError::numerical(format!("path {path}: {e}")))
    })?;
    Ok(assemble(results, dt))
}

fn simulate_one_1d(
    spec: &ModelSpec1D,
    cfg: &SimConfig,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PathResult> {
    let mut x = cfg.x0;
    let mut t = 0.0;
    let mut clamped = 0u64;
    let sqdt = dt.sqrt();
    loop {
        if t >= cfg.horizon {
            return Ok(PathResult {
                outcome: Outcome::Horizon,
                time: t,
                clamped,
            });
        }
        let xe = if (0.0..=spec.x_max).contains(&x) {
            x
        } else {
            clamped += 1;
            x.clamp(0.0, spec.x_max)
        };
        let hp = spec.q_plus_at(xe) * dt;
        let hm = spec.q_minus_at(xe) * dt;
        let u: f64 = rng.gen();
        if u < hp {
            if cfg.free_running {
                x = spec.p_plus.sample(rng, spec.x_max);
            } else if cfg.stops.price_up {
                return Ok(PathResult {
                    outcome: Outcome::PriceUp,
                    time: t + dt,
                    clamped,
                });
            }
            t += dt;
            continue;
        }
        if u < hp + hm {
            if cfg.free_running {
                x = if rng.gen::<f64>() < spec.pi_plus {
                    spec.p_plus.sample(rng, spec.x_max)
                } else {
                    spec.p_minus.sample(rng, spec.x_max)
                };
                t += dt;
                continue;
            }
            if cfg.refill_continues && rng.gen::<f64>() < spec.pi_plus {
                x = spec.p_plus.sample(rng, spec.x_max);
                t += dt;
                continue;
            }
            if cfg.stops.price_down {
                return Ok(PathResult {
                    outcome: Outcome::PriceDown,
                    time: t + dt,
                    clamped,
                });
            }
            t += dt;
            continue;
        }
        // diffusion step: conditional coefficients in stopping mode, the
        // unconditional tilde coefficients when jumps recycle the path
        let (f, d) = if cfg.free_running {
            (spec.f_tilde(xe), spec.d_tilde(xe))
        } else {
            (spec.drift.eval(xe), spec.diffusion.eval(xe))
        };
        let z: f64 = rng.sample(StandardNormal);
        let x_old = x;
        x += f * dt + (2.0 * d).sqrt() * sqdt * z;
        if !x.is_finite() {
            return Err(CoreError::numerical(format!(
                "state became non-finite at t = {t}"
            )));
        }
        t += dt;
        if x <= cfg.eps {
            if cfg.stops.queue_empty && !cfg.free_running {
                return Ok(PathResult {
                    outcome: Outcome::QueueEmpty,
                    time: t,
                    clamped,
                });
            }
            // reflect off the floor
            x = cfg.eps + (cfg.eps - x);
        } else if cfg.stops.queue_empty
            && !cfg.free_running
            && bridge_crossed(rng, x_old - cfg.eps, x - cfg.eps, d, dt)
        {
            // the continuous path dipped below the floor inside the step
            return Ok(PathResult {
                outcome: Outcome::QueueEmpty,
                time: t,
                clamped,
            });
        }
        if x >= spec.x_max {
            if cfg.upper_absorbing {
                return Ok(PathResult {
                    outcome: Outcome::UpperEdge,
                    time: t,
                    clamped,
                });
            }
            x = spec.x_max - (x - spec.x_max);
        } else if cfg.upper_absorbing
            && bridge_crossed(rng, spec.x_max - x_old, spec.x_max - x, d, dt)
        {
            return Ok(PathResult {
                outcome: Outcome::UpperEdge,
                time: t,
                clamped,
            });
        }
    }
}

/// Probability that a Brownian bridge between two same-side endpoints
/// touched the barrier within the step; removes the sqrt(dt) bias of
/// endpoint-only crossing detection at absorbing boundaries.
fn bridge_crossed(rng: &mut ChaCha8Rng, a: f64, b: f64, d: f64, dt: f64) -> bool {
    if a <= 0.0 || b <= 0.0 {
        return true;
    }
    let expo = a * b / (d * dt);
    if expo > 40.0 {
        return false;
    }
    rng.gen::<f64>() < (-expo).exp()
}

/// Long free-running run that records occupancy on `cells` uniform cells;
/// the histogram converges to the stationary law of the full equation.
pub fn occupancy_1d(spec: &ModelSpec1D, cfg: &SimConfig, cells: usize) -> Result<Occupancy> {
    spec.validate()?;
    let dt = reduce_dt(cfg.dt, max_hazard_1d(spec));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut counts = vec![0u64; cells];
    let mut x = cfg.x0;
    let mut t = 0.0;
    let scale = cells as f64 / spec.x_max;
    while t < cfg.horizon {
        let xe = x.clamp(0.0, spec.x_max);
        let hp = spec.q_plus_at(xe) * dt;
        let hm = spec.q_minus_at(xe) * dt;
        let u: f64 = rng.gen();
        if u < hp {
            x = spec.p_plus.sample(&mut rng, spec.x_max);
        } else if u < hp + hm {
            x = if rng.gen::<f64>() < spec.pi_plus {
                spec.p_plus.sample(&mut rng, spec.x_max)
            } else {
                spec.p_minus.sample(&mut rng, spec.x_max)
            };
        } else {
            let z: f64 = rng.sample(StandardNormal);
            x += spec.f_tilde(xe) * dt + (2.0 * spec.d_tilde(xe) * dt).sqrt() * z;
            if !x.is_finite() {
                return Err(CoreError::numerical("state became non-finite"));
            }
            if x <= cfg.eps {
                x = cfg.eps + (cfg.eps - x);
            }
            if x >= spec.x_max {
                x = spec.x_max - (x - spec.x_max);
            }
        }
        let idx = ((x * scale) as usize).min(cells - 1);
        counts[idx] += 1;
        t += dt;
    }
    let total: u64 = counts.iter().sum();
    let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Occupancy {
        edges: (0..=cells)
            .map(|i| spec.x_max * i as f64 / cells as f64)
            .collect(),
        masses,
    })
}

/// 2D simulation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig2D {
    pub start: (f64, f64),
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub free_running: bool,
    pub eps: f64,
    pub jobs: usize,
}

impl Default for SimConfig2D {
    fn default() -> Self {
        SimConfig2D {
            start: (1.0, 1.0),
            dt: 0.05,
            horizon: 1e5,
            n_paths: 1,
            seed: 1,
            free_running: false,
            eps: 1e-3,
            jobs: 1,
        }
    }
}

fn max_hazard_2d(spec: &ModelSpec2D) -> f64 {
    let n = 64;
    let mut worst = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            let x = spec.x_max * i as f64 / n as f64;
            let y = spec.y_max * j as f64 / n as f64;
            worst = worst.max(spec.total_hazard(x, y));
        }
    }
    worst
}

/// Two-queue race simulation: which price event fires first. Outcomes are
/// BidUp/BidDown/AskUp/AskDown (price moves) or Horizon. Diffusion reflects
/// at the domain edges; depletion is a hazard, not a boundary.
pub fn simulate_2d(spec: &ModelSpec2D, cfg: &SimConfig2D) -> Result<PassageEstimate> {
    spec.validate()?;
    if cfg.n_paths == 0 || !crate::numerics::positive(cfg.dt) {
        return Err(CoreError::config("n_paths >= 1 and dt > 0 required"));
    }
    let dt = reduce_dt(cfg.dt, max_hazard_2d(spec));
    let results = run_paths(cfg.n_paths, cfg.seed, cfg.jobs, |rng, path| {
        simulate_one_2d(spec, cfg, dt, rng)
            .map_err(|e| CoreError::numerical(format!("path {path}: {e}")))
    })?;
    Ok(assemble(results, dt))
}

fn simulate_one_2d(
    spec: &ModelSpec2D,
    cfg: &SimConfig2D,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PathResult> {
    let (mut x, mut y) = cfg.start;
    let mut t = 0.0;
    let mut clamped = 0u64;
    loop {
        if t >= cfg.horizon {
            return Ok(PathResult {
                outcome: Outcome::Horizon,
                time: t,
                clamped,
            });
        }
        let (xe, ye) = (x.clamp(0.0, spec.x_max), y.clamp(0.0, spec.y_max));
        if xe != x || ye != y {
            clamped += 1;
        }
        let hb_p = spec.q_plus.eval(xe, ye).max(0.0) * dt;
        let hb_m = spec.q_minus.eval(xe, ye).max(0.0) * dt;
        let ha_p = spec.q_plus.eval(ye, xe).max(0.0) * dt;
        let ha_m = spec.q_minus.eval(ye, xe).max(0.0) * dt;
        let u: f64 = rng.gen();
        let jump = if u < hb_p {
            Some(Outcome::BidUp)
        } else if u < hb_p + hb_m {
            Some(Outcome::BidDown)
        } else if u < hb_p + hb_m + ha_m {
            Some(Outcome::AskUp)
        } else if u < hb_p + hb_m + ha_m + ha_p {
            Some(Outcome::AskDown)
        } else {
            None
        };
        if let Some(o) = jump {
            if !cfg.free_running {
                return Ok(PathResult {
                    outcome: o,
                    time: t + dt,
                    clamped,
                });
            }
            // joint redistribution; ask-side events use swapped densities
            let draw = |rng: &mut ChaCha8Rng, d: &crate::model::Dens2| {
                d.sample(rng, spec.x_max, spec.y_max)
            };
            let (nx, ny) = match o {
                Outcome::BidUp => draw(rng, &spec.p_plus),
                Outcome::AskDown => draw(rng, &spec.p_plus.swapped()),
                Outcome::BidDown => {
                    if rng.gen::<f64>() < spec.pi_plus {
                        draw(rng, &spec.p_plus)
                    } else {
                        draw(rng, &spec.p_minus)
                    }
                }
                _ => {
                    if rng.gen::<f64>() < spec.pi_plus {
                        draw(rng, &spec.p_plus.swapped())
                    } else {
                        draw(rng, &spec.p_minus.swapped())
                    }
                }
            };
            x = nx;
            y = ny;
            t += dt;
            continue;
        }
        let (fx, fy, dx, dy) = if cfg.free_running {
            (
                spec.f_tilde_x(xe, ye),
                spec.f_tilde_y(xe, ye),
                spec.d_tilde_x(xe, ye),
                spec.d_tilde_y(xe, ye),
            )
        } else {
            (
                0.5 * spec.own_drift_x.eval(xe, ye),
                0.5 * spec.own_drift_y.eval(xe, ye),
                0.5 * spec.own_diff_x.eval(xe, ye),
                0.5 * spec.own_diff_y.eval(xe, ye),
            )
        };
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        x += fx * dt + (2.0 * dx * dt).sqrt() * zx;
        y += fy * dt + (2.0 * dy * dt).sqrt() * zy;
        if !x.is_finite() || !y.is_finite() {
            return Err(CoreError::numerical("state became non-finite"));
        }
        if x <= cfg.eps {
            x = cfg.eps + (cfg.eps - x);
        }
        if x >= spec.x_max {
            x = spec.x_max - (x - spec.x_max);
        }
        if y <= cfg.eps {
            y = cfg.eps + (cfg.eps - y);
        }
        if y >= spec.y_max {
            y = spec.y_max - (y - spec.y_max);
        }
        t += dt;
    }
}

/// Record one path's trajectory for plotting: (event time, state) samples
/// every `stride` steps until the path stops or the horizon expires.
pub fn sample_path_1d(
    spec: &ModelSpec1D,
    cfg: &SimConfig,
    stride: usize,
) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let dt = reduce_dt(cfg.dt, max_hazard_1d(spec));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut out = Vec::new();
    let mut x = cfg.x0;
    let mut t = 0.0;
    let mut step = 0usize;
    while t < cfg.horizon {
        if step % stride.max(1) == 0 {
            out.push((t, x));
        }
        step += 1;
        let xe = x.clamp(0.0, spec.x_max);
        let hp = spec.q_plus_at(xe) * dt;
        let hm = spec.q_minus_at(xe) * dt;
        let u: f64 = rng.gen();
        if u < hp {
            if !cfg.free_running {
                break;
            }
            x = spec.p_plus.sample(&mut rng, spec.x_max);
        } else if u < hp + hm {
            if !cfg.free_running {
                break;
            }
            x = if rng.gen::<f64>() < spec.pi_plus {
                spec.p_plus.sample(&mut rng, spec.x_max)
            } else {
                spec.p_minus.sample(&mut rng, spec.x_max)
            };
        } else {
            let (f, d) = if cfg.free_running {
                (spec.f_tilde(xe), spec.d_tilde(xe))
            } else {
                (spec.drift.eval(xe), spec.diffusion.eval(xe))
            };
            let z: f64 = rng.sample(StandardNormal);
            x += f * dt + (2.0 * d * dt).sqrt() * z;
            if x <= cfg.eps {
                if cfg.stops.queue_empty && !cfg.free_running {
                    out.push((t + dt, x.max(0.0)));
                    break;
                }
                x = cfg.eps + (cfg.eps - x);
            }
            if x >= spec.x_max {
                x = spec.x_max - (x - spec.x_max);
            }
        }
        t += dt;
    }
    Ok(out)
}

/// Free-running 2D occupancy on an n x n grid of the domain.
pub fn occupancy_2d(
    spec: &ModelSpec2D,
    cfg: &SimConfig2D,
    n: usize,
) -> Result<crate::grid::Grid2D> {
    spec.validate()?;
    let dt = reduce_dt(cfg.dt, max_hazard_2d(spec));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut grid = crate::grid::Grid2D::uniform(n, n, spec.x_max, spec.y_max);
    let (mut x, mut y) = cfg.start;
    let mut t = 0.0;
    let mut total = 0u64;
    while t < cfg.horizon {
        // single free-running step, same hazard layout as simulate_one_2d
        let (xe, ye) = (x.clamp(0.0, spec.x_max), y.clamp(0.0, spec.y_max));
        let hb_p = spec.q_plus.eval(xe, ye).max(0.0) * dt;
        let hb_m = spec.q_minus.eval(xe, ye).max(0.0) * dt;
        let ha_p = spec.q_plus.eval(ye, xe).max(0.0) * dt;
        let ha_m = spec.q_minus.eval(ye, xe).max(0.0) * dt;
        let u: f64 = rng.gen();
        if u < hb_p + hb_m + ha_m + ha_p {
            let bid_side = u < hb_p + hb_m;
            let improve = u < hb_p || u >= hb_p + hb_m + ha_m;
            let refill = !improve && rng.gen::<f64>() < spec.pi_plus;
            let dens = if bid_side {
                if improve || refill {
                    spec.p_plus.clone()
                } else {
                    spec.p_minus.clone()
                }
            } else if improve || refill {
                spec.p_plus.swapped()
            } else {
                spec.p_minus.swapped()
            };
            let (nx, ny) = dens.sample(&mut rng, spec.x_max, spec.y_max);
            x = nx;
            y = ny;
        } else {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            x += spec.f_tilde_x(xe, ye) * dt + (2.0 * spec.d_tilde_x(xe, ye) * dt).sqrt() * zx;
            y += spec.f_tilde_y(xe, ye) * dt + (2.0 * spec.d_tilde_y(xe, ye) * dt).sqrt() * zy;
            if x <= cfg.eps {
                x = cfg.eps + (cfg.eps - x);
            }
            if x >= spec.x_max {
                x = spec.x_max - (x - spec.x_max);
            }
            if y <= cfg.eps {
                y = cfg.eps + (cfg.eps - y);
            }
            if y >= spec.y_max {
                y = spec.y_max - (y - spec.y_max);
            }
        }
        if let Some((i, j)) = grid.cell_of(x, y) {
            grid.counts[i][j] += 1;
            total += 1;
        }
        t += dt;
    }
    for i in 0..n {
        for j in 0..n {
            let mass = grid.counts[i][j] as f64 / total as f64;
            grid.values[i][j] = Some(mass / grid.cell_area(i, j));
        }
    }
    Ok(grid)
}
