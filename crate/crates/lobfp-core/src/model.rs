//! Model specifications: coefficient functions, replacement densities, and
//! the 1D/2D generative parameterizations shared by the stationary solvers,
//! the Monte Carlo simulator, and the synthetic event generator.
//!
//! Conventions. `drift` and `diffusion` are the per-event conditional
//! moments given no price change: f(x) is the mean rescaled volume change
//! and d(x) is half its mean square. `q_plus`/`q_minus` are per-event jump
//! probabilities. The unconditional ("tilde") coefficients that enter the
//! evolution equation are `pi0 * f` and `pi0 * d`, with `pi0 = 1 - q+ - q-`.
//! In 2D a further factor 1/2 appears because each event touches one side
//! of the book with equal probability.

use crate::error::CoreError;
use crate::grid::Grid1D;
use crate::numerics::{normal_cdf, positive};
use crate::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scalar coefficient function of the rescaled volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coef1 {
    Const {
        value: f64,
    },
    /// intercept + slope * x
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// Piecewise-linear interpolation, clamped outside the knot range.
    PiecewiseLinear {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl Coef1 {
    pub fn constant(v: f64) -> Self {
        Coef1::Const { value: v }
    }

    /// Mean-reverting drift kappa * (mean - x).
    pub fn reverting(kappa: f64, mean: f64) -> Self {
        Coef1::Linear {
            intercept: kappa * mean,
            slope: -kappa,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coef1::Const { value } => *value,
            Coef1::Linear { intercept, slope } => intercept + slope * x,
            Coef1::PiecewiseLinear { xs, ys } => {
                if xs.is_empty() {
                    return 0.0;
                }
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= *xs.last().unwrap() {
                    return *ys.last().unwrap();
                }
                let i = xs.partition_point(|&k| k <= x) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + t * (ys[i + 1] - ys[i])
            }
        }
    }

    /// Build an interpolant from the defined bins of a calibration grid,
    /// extending the nearest defined value toward both domain ends.
    pub fn from_grid(grid: &Grid1D) -> Result<Self> {
        let pts: Vec<(f64, f64)> = grid.defined().collect();
        if pts.is_empty() {
            return Err(CoreError::data("grid has no defined bins"));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        Ok(Coef1::PiecewiseLinear { xs, ys })
    }
}

/// Probability density over rescaled volume, truncated to the model domain
/// [0, x_max] wherever it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dens1 {
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    TruncNormal { mean: f64, sd: f64 },
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
}

impl Dens1 {
    /// Untruncated CDF on [0, inf).
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Dens1::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Dens1::Exponential { mean } => 1.0 - (-x / mean).exp(),
            Dens1::TruncNormal { mean, sd } => {
                let z0 = normal_cdf((0.0 - mean) / sd);
                ((normal_cdf((x - mean) / sd) - z0) / (1.0 - z0)).clamp(0.0, 1.0)
            }
            Dens1::Histogram { edges, masses } => {
                let mut acc = 0.0;
                let total: f64 = masses.iter().sum();
                for (i, m) in masses.iter().enumerate() {
                    let (a, b) = (edges[i], edges[i + 1]);
                    if x >= b {
                        acc += m;
                    } else if x > a {
                        acc += m * (x - a) / (b - a);
                        break;
                    } else {
                        break;
                    }
                }
                acc / total
            }
        }
    }

    /// Probability mass on [a, b] after truncation to [0, x_max].
    pub fn mass_between(&self, a: f64, b: f64, x_max: f64) -> f64 {
        let z = self.cdf(x_max);
        if z <= 0.0 {
            return 0.0;
        }
        (self.cdf(b.min(x_max)) - self.cdf(a.clamp(0.0, x_max))).max(0.0) / z
    }

    /// Mean of the density truncated to [0, x_max], by fine quadrature.
    pub fn mean_truncated(&self, x_max: f64) -> f64 {
        let n = 4000;
        let h = x_max / n as f64;
        let mut m = 0.0;
        for i in 0..n {
            let a = i as f64 * h;
            m += (a + 0.5 * h) * self.mass_between(a, a + h, x_max);
        }
        m
    }

    /// Draw from the density truncated to (0, x_max].
    pub fn sample<R: Rng>(&self, rng: &mut R, x_max: f64) -> f64 {
        match self {
            Dens1::Uniform { lo, hi } => {
                let a = lo.max(0.0);
                let b = hi.min(x_max);
                a + rng.gen::<f64>() * (b - a).max(0.0)
            }
            Dens1::Exponential { mean } => {
                let zmax = 1.0 - (-x_max / mean).exp();
                let u = rng.gen::<f64>() * zmax;
                -mean * (1.0 - u).ln()
            }
            Dens1::TruncNormal { mean, sd } => {
                for _ in 0..1024 {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    let x = mean + sd * z;
                    if x > 0.0 && x <= x_max {
                        return x;
                    }
                }
                mean.clamp(f64::MIN_POSITIVE, x_max)
            }
            Dens1::Histogram { edges, masses } => {
                let total: f64 = masses
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| edges[*i] < x_max)
                    .map(|(_, m)| m)
                    .sum();
                let mut u = rng.gen::<f64>() * total;
                for (i, m) in masses.iter().enumerate() {
                    if edges[i] >= x_max {
                        break;
                    }
                    if u < *m {
                        let (a, b) = (edges[i], edges[i + 1].min(x_max));
                        return a + (u / m) * (b - a);
                    }
                    u -= m;
                }
                edges[0].max(0.0)
            }
        }
    }

    /// Cell masses on a grid, normalized to sum to exactly 1.
    pub fn rebin(&self, edges: &[f64]) -> Vec<f64> {
        let x_max = *edges.last().unwrap();
        let mut masses: Vec<f64> = edges
            .windows(2)
            .map(|w| self.mass_between(w[0], w[1], x_max))
            .collect();
        let total: f64 = masses.iter().sum();
        if total > 0.0 {
            for m in &mut masses {
                *m /= total;
            }
        }
        masses
    }
}

/// Complete 1D generative parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec1D {
    /// f(x): mean volume change per event, conditional on no price change.
    pub drift: Coef1,
    /// d(x): half mean squared volume change per event, same conditioning.
    pub diffusion: Coef1,
    /// Per-event probability the queue is overtaken at an improved price.
    pub q_plus: Coef1,
    /// Per-event probability the queue is depleted.
    pub q_minus: Coef1,
    /// Replacement volume density for improved quotes and refills.
    pub p_plus: Dens1,
    /// Replacement volume density for the promoted second-best queue.
    pub p_minus: Dens1,
    /// Probability a depleted queue refills at the same price.
    pub pi_plus: f64,
    pub x_max: f64,
    /// Default solver resolution.
    pub n_cells: usize,
    /// Optional seasonal drift correction term (the -x (dvbar/dt)/vbar of
    /// the rescaled equation); absent for stationary synthetic models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_correction: Option<Coef1>,
}

impl ModelSpec1D {
    pub fn q_plus_at(&self, x: f64) -> f64 {
        self.q_plus.eval(x).max(0.0)
    }

    pub fn q_minus_at(&self, x: f64) -> f64 {
        self.q_minus.eval(x).max(0.0)
    }

    pub fn pi0(&self, x: f64) -> f64 {
        1.0 - self.q_plus_at(x) - self.q_minus_at(x)
    }

    /// Unconditional per-event drift entering the evolution equation.
    pub fn f_tilde(&self, x: f64) -> f64 {
        let base = self.pi0(x) * self.drift.eval(x);
        match &self.drift_correction {
            Some(c) => base + c.eval(x),
            None => base,
        }
    }

    /// Unconditional per-event diffusion.
    pub fn d_tilde(&self, x: f64) -> f64 {
        self.pi0(x) * self.diffusion.eval(x)
    }

    pub fn has_jumps(&self) -> bool {
        let n = 512;
        (0..=n).any(|i| {
            let x = self.x_max * i as f64 / n as f64;
            self.q_plus_at(x) > 0.0 || self.q_minus_at(x) > 0.0
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !positive(self.x_max) || self.n_cells < 8 {
            return Err(CoreError::config("x_max must be positive, n_cells >= 8"));
        }
        if !(0.0..=1.0).contains(&self.pi_plus) {
            return Err(CoreError::config(format!(
                "pi_plus = {} outside [0, 1]",
                self.pi_plus
            )));
        }
        let n = 1024;
        for i in 0..=n {
            let x = self.x_max * i as f64 / n as f64;
            let d = self.diffusion.eval(x);
            if i > 0 && !positive(d) {
                return Err(CoreError::config(format!(
                    "diffusion d({x:.4}) = {d} must be positive on the open domain"
                )));
            }
            let pi0 = 1.0 - self.q_plus.eval(x) - self.q_minus.eval(x);
            if pi0 < 0.0 {
                return Err(CoreError::config(format!(
                    "q+(x) + q-(x) > 1 at x = {x:.4} (pi0 = {pi0:.4})"
                )));
            }
        }
        Ok(())
    }
}

/// Scalar coefficient over the (x, y) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coef2 {
    Const {
        value: f64,
    },
    /// g(x), constant in y.
    OfX {
        f: Coef1,
    },
    /// g(y), constant in x.
    OfY {
        f: Coef1,
    },
    Sum {
        terms: Vec<Coef2>,
    },
}

impl Coef2 {
    pub fn constant(v: f64) -> Self {
        Coef2::Const { value: v }
    }

    pub fn of_x(f: Coef1) -> Self {
        Coef2::OfX { f }
    }

    pub fn of_y(f: Coef1) -> Self {
        Coef2::OfY { f }
    }

    pub fn sum(terms: Vec<Coef2>) -> Self {
        Coef2::Sum { terms }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Coef2::Const { value } => *value,
            Coef2::OfX { f } => f.eval(x),
            Coef2::OfY { f } => f.eval(y),
            Coef2::Sum { terms } => terms.iter().map(|t| t.eval(x, y)).sum(),
        }
    }
}

/// Joint replacement density over (x, y); the product form covers the
/// synthetic models, a calibrated joint histogram can be rebinned into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dens2 {
    Product { x: Dens1, y: Dens1 },
}

impl Dens2 {
    /// Mass of the cell [ax,bx] x [ay,by] truncated to the domain.
    pub fn mass_cell(&self, ax: f64, bx: f64, ay: f64, by: f64, x_max: f64, y_max: f64) -> f64 {
        match self {
            Dens2::Product { x, y } => {
                x.mass_between(ax, bx, x_max) * y.mass_between(ay, by, y_max)
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, x_max: f64, y_max: f64) -> (f64, f64) {
        match self {
            Dens2::Product { x, y } => (x.sample(rng, x_max), y.sample(rng, y_max)),
        }
    }

    /// The same density with the roles of x and y exchanged.
    pub fn swapped(&self) -> Dens2 {
        match self {
            Dens2::Product { x, y } => Dens2::Product {
                x: y.clone(),
                y: x.clone(),
            },
        }
    }
}

/// Complete 2D generative parameterization. Price-changing events are
/// bid/ask symmetric: the bid-side hazards are `q_plus(x|y)` evaluated at
/// (x, y), the ask-side ones the same functions at (y, x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec2D {
    /// E[delta | bid volume event at (x, y)], no price change.
    pub own_drift_x: Coef2,
    /// E[delta | ask volume event at (x, y)].
    pub own_drift_y: Coef2,
    /// Half second moment of the bid volume change per bid event.
    pub own_diff_x: Coef2,
    /// Half second moment of the ask volume change per ask event.
    pub own_diff_y: Coef2,
    /// q+(x|y): probability the bid queue is overtaken, given state (x, y).
    pub q_plus: Coef2,
    /// q-(x|y): probability the bid queue is depleted, given state (x, y).
    pub q_minus: Coef2,
    /// Joint replacement state after a bid-side improvement.
    pub p_plus: Dens2,
    /// Joint replacement state after a bid-side recede.
    pub p_minus: Dens2,
    pub pi_plus: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl ModelSpec2D {
    /// Total jump hazard at (x, y), both sides.
    pub fn total_hazard(&self, x: f64, y: f64) -> f64 {
        self.q_plus.eval(x, y).max(0.0)
            + self.q_minus.eval(x, y).max(0.0)
            + self.q_plus.eval(y, x).max(0.0)
            + self.q_minus.eval(y, x).max(0.0)
    }

    pub fn pi0(&self, x: f64, y: f64) -> f64 {
        1.0 - self.total_hazard(x, y)
    }

    /// Unconditional per-event drift of the bid coordinate (the 1/2 is the
    /// probability the event touches the bid).
    pub fn f_tilde_x(&self, x: f64, y: f64) -> f64 {
        0.5 * self.pi0(x, y) * self.own_drift_x.eval(x, y)
    }

    pub fn f_tilde_y(&self, x: f64, y: f64) -> f64 {
        0.5 * self.pi0(x, y) * self.own_drift_y.eval(x, y)
    }

    pub fn d_tilde_x(&self, x: f64, y: f64) -> f64 {
        0.5 * self.pi0(x, y) * self.own_diff_x.eval(x, y)
    }

    pub fn d_tilde_y(&self, x: f64, y: f64) -> f64 {
        0.5 * self.pi0(x, y) * self.own_diff_y.eval(x, y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(positive(self.x_max) && positive(self.y_max)) || self.nx < 8 || self.ny < 8 {
            return Err(CoreError::config("domain must be positive, nx/ny >= 8"));
        }
        if !(0.0..=1.0).contains(&self.pi_plus) {
            return Err(CoreError::config("pi_plus outside [0, 1]"));
        }
        let n = 64;
        for i in 0..=n {
            for j in 0..=n {
                let x = self.x_max * i as f64 / n as f64;
                let y = self.y_max * j as f64 / n as f64;
                if self.pi0(x, y) < 0.0 {
                    return Err(CoreError::config(format!(
                        "total jump hazard exceeds 1 at ({x:.3}, {y:.3})"
                    )));
                }
                if i > 0 && !positive(self.own_diff_x.eval(x, y)) {
                    return Err(CoreError::config(format!(
                        "own_diff_x not positive at ({x:.3}, {y:.3})"
                    )));
                }
                if j > 0 && !positive(self.own_diff_y.eval(x, y)) {
                    return Err(CoreError::config(format!(
                        "own_diff_y not positive at ({x:.3}, {y:.3})"
                    )));
                }
            }
        }
        Ok(())
    }
}
