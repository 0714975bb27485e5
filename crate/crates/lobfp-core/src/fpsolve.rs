//! Stationary solvers for the rescaled evolution equation: the closed-form
//! zero-current solution when jumps are absent, a discrete-generator null
//! vector solve for the full 1D equation with birth-death terms, and a
//! time-stepped 2D relaxation.
//!
//! The drift-diffusion flux is discretized in exponentially-fitted
//! conservative form: the flux between cells i and i+1 is
//!
//! ```text
//! J = (d~_i P_i e^{-du/2} - d~_{i+1} P_{i+1} e^{+du/2}) / dx,
//! du = u_{i+1} - u_i,   u = -int f~/d~ (trapezoid at cell centers)
//! ```
//!
//! which keeps all transition rates nonnegative (the large-drift limit is
//! the upwind scheme) and makes the discrete zero-current solution exactly
//! P ~ e^{-u}/d~ with the same trapezoid potential the closed form uses.
//! Boundaries reflect; depletion enters only through the q- jump term.

use crate::error::CoreError;
use crate::grid::Grid2D;
use crate::model::{ModelSpec1D, ModelSpec2D};
use crate::numerics::{cumtrapz, positive, solve_dense};
use crate::Result;
use serde::{Deserialize, Serialize};

/// Stationary density on a 1D grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryResult {
    /// Cell edges, length n + 1.
    pub edges: Vec<f64>,
    /// Probability density at cell centers; integrates to 1.
    pub pst: Vec<f64>,
    /// Potential u(x) = -int f~/d~ at cell centers.
    pub potential: Vec<f64>,
    /// Residual norm of the discrete stationary equation.
    pub flux_residual: f64,
    pub iterations: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl StationaryResult {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        self.pst
            .iter()
            .zip(self.edges.windows(2))
            .map(|(p, w)| p * (w[1] - w[0]))
            .collect()
    }

    /// CDF evaluated at x by linear interpolation of cell masses.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (i, w) in self.edges.windows(2).enumerate() {
            if x >= w[1] {
                acc += self.pst[i] * (w[1] - w[0]);
            } else if x > w[0] {
                acc += self.pst[i] * (x - w[0]);
                break;
            } else {
                break;
            }
        }
        acc.min(1.0)
    }
}

fn centers(n: usize, x_max: f64) -> (Vec<f64>, f64) {
    let dx = x_max / n as f64;
    ((0..n).map(|i| (i as f64 + 0.5) * dx).collect(), dx)
}

/// Trapezoid potential u = -int f~/d~ at the cell centers.
fn potential_at_centers(spec: &ModelSpec1D, xs: &[f64]) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let d = spec.d_tilde(x);
        if !positive(d) {
            return Err(CoreError::numerical(format!(
                "diffusion vanishes at cell {i} (x = {x:.4})"
            )));
        }
        g.push(spec.f_tilde(x) / d);
    }
    Ok(cumtrapz(xs, &g).iter().map(|v| -v).collect())
}

/// Closed-form zero-current stationary solution, valid when q+ = q- = 0:
/// P(x) proportional to exp(-u(x)) / d(x).
pub fn gibbs_boltzmann(spec: &ModelSpec1D) -> Result<StationaryResult> {
    spec.validate()?;
    if spec.has_jumps() {
        return Err(CoreError::config(
            "gibbs_boltzmann requires q+ = q- = 0; use stationary_1d",
        ));
    }
    let n = spec.n_cells;
    let (xs, dx) = centers(n, spec.x_max);
    let u = potential_at_centers(spec, &xs)?;
    let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = xs
        .iter()
        .zip(&u)
        .map(|(&x, &ui)| (-(ui - umin)).exp() / spec.d_tilde(x))
        .collect();
    let total: f64 = p.iter().sum::<f64>() * dx;
    if !total.is_finite() || total <= 0.0 {
        return Err(CoreError::numerical(format!(
            "non-normalizable density (integral = {total})"
        )));
    }
    for v in &mut p {
        *v /= total;
    }
    let mut warnings = Vec::new();
    check_edge_mass(&p, dx, spec.x_max, &mut warnings);
    Ok(StationaryResult {
        edges: grid_edges(n, spec.x_max),
        pst: p,
        potential: u,
        flux_residual: 0.0,
        iterations: 0,
        warnings,
    })
}

fn grid_edges(n: usize, x_max: f64) -> Vec<f64> {
    (0..=n).map(|i| x_max * i as f64 / n as f64).collect()
}

fn check_edge_mass(p: &[f64], dx: f64, x_max: f64, warnings: &mut Vec<String>) {
    let n = p.len();
    let tail_cells = ((0.01 * n as f64).ceil() as usize).max(1);
    let tail: f64 = p[n - tail_cells..].iter().sum::<f64>() * dx;
    if tail > 1e-4 {
        warnings.push(format!(
            "stationary mass {tail:.2e} within 1% of x_max = {x_max}; consider a larger domain"
        ));
    }
}

/// Discrete generator of the 1D dynamics on cell masses: a birth-death flux
/// chain plus birth-death jump terms.
pub struct Generator1D {
    pub n: usize,
    pub dx: f64,
    pub xs: Vec<f64>,
    /// Rate from cell i to i+1, length n-1.
    pub up: Vec<f64>,
    /// Rate from cell i+1 to i, length n-1.
    pub down: Vec<f64>,
    /// Jump out-rate per cell (q+ + q-).
    pub jump_out: Vec<f64>,
    /// q+ at the cell, reinjecting with `mass_plus`.
    pub q_plus: Vec<f64>,
    /// q- at the cell, reinjecting with `mass_mix`.
    pub q_minus: Vec<f64>,
    /// Rebinned replacement masses (sum to 1).
    pub mass_plus: Vec<f64>,
    pub mass_mix: Vec<f64>,
    pub potential: Vec<f64>,
}

impl Generator1D {
    pub fn build(spec: &ModelSpec1D, n: usize) -> Result<Generator1D> {
        spec.validate()?;
        let (xs, dx) = centers(n, spec.x_max);
        let u = potential_at_centers(spec, &xs)?;
        let mut up = vec![0.0; n - 1];
        let mut down = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let du = u[i + 1] - u[i];
            let e = (0.5 * du).exp();
            // rates keep detailed balance with p ~ e^{-u}/d~
            up[i] = spec.d_tilde(xs[i]) / e / (dx * dx);
            down[i] = spec.d_tilde(xs[i + 1]) * e / (dx * dx);
        }
        let edges = grid_edges(n, spec.x_max);
        let mass_p = spec.p_plus.rebin(&edges);
        let mass_m = spec.p_minus.rebin(&edges);
        let mass_mix: Vec<f64> = mass_p
            .iter()
            .zip(&mass_m)
            .map(|(a, b)| spec.pi_plus * a + (1.0 - spec.pi_plus) * b)
            .collect();
        let q_plus: Vec<f64> = xs.iter().map(|&x| spec.q_plus_at(x)).collect();
        let q_minus: Vec<f64> = xs.iter().map(|&x| spec.q_minus_at(x)).collect();
        let jump_out: Vec<f64> = q_plus.iter().zip(&q_minus).map(|(a, b)| a + b).collect();
        Ok(Generator1D {
            n,
            dx,
            xs,
            up,
            down,
            jump_out,
            q_plus,
            q_minus,
            mass_plus: mass_p,
            mass_mix,
            potential: u,
        })
    }

    /// dp/dt for a mass vector p.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n - 1 {
            let flux = self.up[i] * p[i] - self.down[i] * p[i + 1];
            out[i] -= flux;
            out[i + 1] += flux;
        }
        let mut inj_plus = 0.0;
        let mut inj_minus = 0.0;
        for i in 0..n {
            out[i] -= self.jump_out[i] * p[i];
            inj_plus += self.q_plus[i] * p[i];
            inj_minus += self.q_minus[i] * p[i];
        }
        for i in 0..n {
            out[i] += inj_plus * self.mass_plus[i] + inj_minus * self.mass_mix[i];
        }
        out
    }

    /// Column sums of the generator matrix (must vanish: mass conservation).
    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.n;
        let mut sums = vec![0.0; n];
        for (i, s) in sums.iter_mut().enumerate() {
            let mut acc = 0.0;
            if i < n - 1 {
                acc += -self.up[i] + self.up[i];
            }
            // explicit per-column accumulation matching `apply`
            let mut col = 0.0;
            if i < n - 1 {
                col += -self.up[i]; // leaves i rightward
                col += self.up[i]; // arrives at i+1
            }
            if i > 0 {
                col += -self.down[i - 1]; // leaves i leftward
                col += self.down[i - 1]; // arrives at i-1
            }
            col += -self.jump_out[i];
            let mp: f64 = self.mass_plus.iter().sum();
            let mm: f64 = self.mass_mix.iter().sum();
            col += self.q_plus[i] * mp + self.q_minus[i] * mm;
            *s = acc + col;
        }
        sums
    }

    /// Dense generator matrix (column-stochastic rates), for the null solve.
    fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n - 1 {
            m[i][i] -= self.up[i];
            m[i + 1][i] += self.up[i];
            m[i + 1][i + 1] -= self.down[i];
            m[i][i + 1] += self.down[i];
        }
        for i in 0..n {
            m[i][i] -= self.jump_out[i];
            for j in 0..n {
                m[j][i] += self.q_plus[i] * self.mass_plus[j] + self.q_minus[i] * self.mass_mix[j];
            }
        }
        m
    }
}

/// Full 1D stationary solve with birth-death jump terms: the null vector of
/// the discrete generator, normalized to unit mass.
pub fn stationary_1d(spec: &ModelSpec1D) -> Result<StationaryResult> {
    stationary_1d_at(spec, spec.n_cells)
}

/// Same solve at an explicit resolution (used for refinement studies).
pub fn stationary_1d_at(spec: &ModelSpec1D, n: usize) -> Result<StationaryResult> {
    let gen = Generator1D::build(spec, n)?;
    let mut m = gen.dense();
    // replace the last row by the normalization constraint sum p = 1
    for j in 0..n {
        m[n - 1][j] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let p = solve_dense(m, rhs)
        .map_err(|e| CoreError::numerical(format!("stationary null solve failed: {e}")))?;
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-12 {
        return Err(CoreError::numerical(format!(
            "stationary solution has negative mass {min:.3e}"
        )));
    }
    let mut masses: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = masses.iter().sum();
    if !positive(total) {
        return Err(CoreError::numerical("stationary solution has zero mass"));
    }
    for v in &mut masses {
        *v /= total;
    }
    let residual = gen
        .apply(&masses)
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max);
    let mut warnings = Vec::new();
    let pst: Vec<f64> = masses.iter().map(|m| m / gen.dx).collect();
    check_edge_mass(&pst, gen.dx, spec.x_max, &mut warnings);
    Ok(StationaryResult {
        edges: grid_edges(n, spec.x_max),
        pst,
        potential: gen.potential.clone(),
        flux_residual: residual,
        iterations: 0,
        warnings,
    })
}

/// Options for the 2D relaxation.
#[derive(Debug, Clone)]
pub struct Solve2DOptions {
    /// Stop when the L1 change per unit time falls below this.
    pub tol: f64,
    pub max_iters: u64,
    /// Safety factor on the stability-limited step.
    pub safety: f64,
}

impl Default for Solve2DOptions {
    fn default() -> Self {
        Solve2DOptions {
            tol: 1e-9,
            max_iters: 4_000_000,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stationary2DResult {
    pub density: Grid2D,
    pub iterations: u64,
    pub residual: f64,
    pub dt: f64,
}

struct Rates2D {
    nx: usize,
    ny: usize,
    /// x-direction rates per (i, j): i -> i+1 and i+1 -> i, length (nx-1)*ny.
    up_x: Vec<f64>,
    down_x: Vec<f64>,
    /// y-direction rates per (i, j): j -> j+1 and back, length nx*(ny-1).
    up_y: Vec<f64>,
    down_y: Vec<f64>,
    /// per-cell jump hazards for the four jump channels
    qb_plus: Vec<f64>,
    qb_minus: Vec<f64>,
    qa_plus: Vec<f64>,
    qa_minus: Vec<f64>,
    /// replacement mass templates (each sums to 1)
    m_bp: Vec<f64>,
    m_bm: Vec<f64>,
    m_ap: Vec<f64>,
    m_am: Vec<f64>,
}

fn build_rates_2d(spec: &ModelSpec2D) -> Result<Rates2D> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let dx = spec.x_max / nx as f64;
    let dy = spec.y_max / ny as f64;
    let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
    let ys: Vec<f64> = (0..ny).map(|j| (j as f64 + 0.5) * dy).collect();
    let idx = |i: usize, j: usize| i * ny + j;

    // x-direction: exponential fitting with the local face potential
    // increment du = -(f/d)_face * dx (trapezoid between neighbor centers)
    let mut up_x = vec![0.0; (nx - 1) * ny];
    let mut down_x = vec![0.0; (nx - 1) * ny];
    for j in 0..ny {
        for i in 0..nx - 1 {
            let d0 = spec.d_tilde_x(xs[i], ys[j]);
            let d1 = spec.d_tilde_x(xs[i + 1], ys[j]);
            if !(positive(d0) && positive(d1)) {
                return Err(CoreError::numerical(format!(
                    "x-diffusion vanishes near cell ({i},{j})"
                )));
            }
            let g0 = spec.f_tilde_x(xs[i], ys[j]) / d0;
            let g1 = spec.f_tilde_x(xs[i + 1], ys[j]) / d1;
            let du = -0.5 * (g0 + g1) * dx;
            let e = (0.5 * du).exp();
            up_x[i * ny + j] = d0 / e / (dx * dx);
            down_x[i * ny + j] = d1 * e / (dx * dx);
        }
    }
    let mut up_y = vec![0.0; nx * (ny - 1)];
    let mut down_y = vec![0.0; nx * (ny - 1)];
    for i in 0..nx {
        for j in 0..ny - 1 {
            let d0 = spec.d_tilde_y(xs[i], ys[j]);
            let d1 = spec.d_tilde_y(xs[i], ys[j + 1]);
            if !(positive(d0) && positive(d1)) {
                return Err(CoreError::numerical(format!(
                    "y-diffusion vanishes near cell ({i},{j})"
                )));
            }
            let g0 = spec.f_tilde_y(xs[i], ys[j]) / d0;
            let g1 = spec.f_tilde_y(xs[i], ys[j + 1]) / d1;
            let du = -0.5 * (g0 + g1) * dy;
            let e = (0.5 * du).exp();
            up_y[i * (ny - 1) + j] = d0 / e / (dy * dy);
            down_y[i * (ny - 1) + j] = d1 * e / (dy * dy);
        }
    }

    let n = nx * ny;
    let mut qb_plus = vec![0.0; n];
    let mut qb_minus = vec![0.0; n];
    let mut qa_plus = vec![0.0; n];
    let mut qa_minus = vec![0.0; n];
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = (xs[i], ys[j]);
            qb_plus[idx(i, j)] = spec.q_plus.eval(x, y).max(0.0);
            qb_minus[idx(i, j)] = spec.q_minus.eval(x, y).max(0.0);
            qa_plus[idx(i, j)] = spec.q_plus.eval(y, x).max(0.0);
            qa_minus[idx(i, j)] = spec.q_minus.eval(y, x).max(0.0);
        }
    }

    let cell_mass = |dens: &crate::model::Dens2| -> Vec<f64> {
        let mut m = vec![0.0; n];
        for i in 0..nx {
            for j in 0..ny {
                m[idx(i, j)] = dens.mass_cell(
                    i as f64 * dx,
                    (i + 1) as f64 * dx,
                    j as f64 * dy,
                    (j + 1) as f64 * dy,
                    spec.x_max,
                    spec.y_max,
                );
            }
        }
        let t: f64 = m.iter().sum();
        if t > 0.0 {
            for v in &mut m {
                *v /= t;
            }
        }
        m
    };
    let m_bp = cell_mass(&spec.p_plus);
    let m_bm_raw = cell_mass(&spec.p_minus);
    let m_ap = cell_mass(&spec.p_plus.swapped());
    let m_am_raw = cell_mass(&spec.p_minus.swapped());
    let mix = |plus: &[f64], minus: &[f64]| -> Vec<f64> {
        plus.iter()
            .zip(minus)
            .map(|(a, b)| spec.pi_plus * a + (1.0 - spec.pi_plus) * b)
            .collect()
    };
    let m_bm = mix(&m_bp, &m_bm_raw);
    let m_am = mix(&m_ap, &m_am_raw);
    Ok(Rates2D {
        nx,
        ny,
        up_x,
        down_x,
        up_y,
        down_y,
        qb_plus,
        qb_minus,
        qa_plus,
        qa_minus,
        m_bp,
        m_bm,
        m_ap,
        m_am,
    })
}

impl Rates2D {
    fn max_outflow(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut worst = 0.0f64;
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                let mut out =
                    self.qb_plus[k] + self.qb_minus[k] + self.qa_plus[k] + self.qa_minus[k];
                if i < nx - 1 {
                    out += self.up_x[i * ny + j];
                }
                if i > 0 {
                    out += self.down_x[(i - 1) * ny + j];
                }
                if j < ny - 1 {
                    out += self.up_y[i * (ny - 1) + j];
                }
                if j > 0 {
                    out += self.down_y[i * (ny - 1) + j - 1];
                }
                worst = worst.max(out);
            }
        }
        worst
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for i in 0..nx - 1 {
            for j in 0..ny {
                let k = i * ny + j;
                let flux = self.up_x[k] * p[k] - self.down_x[k] * p[k + ny];
                out[k] -= flux;
                out[k + ny] += flux;
            }
        }
        for i in 0..nx {
            for j in 0..ny - 1 {
                let k = i * ny + j;
                let flux =
                    self.up_y[i * (ny - 1) + j] * p[k] - self.down_y[i * (ny - 1) + j] * p[k + 1];
                out[k] -= flux;
                out[k + 1] += flux;
            }
        }
        let mut ib_p = 0.0;
        let mut ib_m = 0.0;
        let mut ia_p = 0.0;
        let mut ia_m = 0.0;
        for k in 0..nx * ny {
            let q = self.qb_plus[k] + self.qb_minus[k] + self.qa_plus[k] + self.qa_minus[k];
            out[k] -= q * p[k];
            ib_p += self.qb_plus[k] * p[k];
            ib_m += self.qb_minus[k] * p[k];
            ia_p += self.qa_plus[k] * p[k];
            ia_m += self.qa_minus[k] * p[k];
        }
        for k in 0..nx * ny {
            out[k] += ib_p * self.m_bp[k]
                + ib_m * self.m_bm[k]
                + ia_p * self.m_ap[k]
                + ia_m * self.m_am[k];
        }
    }
}

/// Time-step the discrete 2D generator from the uniform density until the
/// L1 change per unit time drops below tolerance.
pub fn stationary_2d(spec: &ModelSpec2D, opts: &Solve2DOptions) -> Result<Stationary2DResult> {
    let rates = build_rates_2d(spec)?;
    let (nx, ny) = (rates.nx, rates.ny);
    let n = nx * ny;
    let max_out = rates.max_outflow();
    if !positive(max_out) {
        return Err(CoreError::numerical("degenerate generator (no rates)"));
    }
    let dt = opts.safety / max_out;
    if !positive(dt) || dt < 1e-300 {
        return Err(CoreError::numerical("stability-limited step underflowed"));
    }
    let mut p = vec![1.0 / n as f64; n];
    let mut dp = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut history: Vec<f64> = Vec::new();
    let mut iters = 0;
    while iters < opts.max_iters {
        rates.apply(&p, &mut dp);
        let mut change = 0.0;
        for k in 0..n {
            let step = dt * dp[k];
            p[k] += step;
            change += step.abs();
        }
        // renormalize against drifting round-off
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        residual = change / dt;
        iters += 1;
        if iters % 1000 == 0 {
            history.push(residual);
            if history.len() > 32 {
                history.remove(0);
            }
        }
        if residual < opts.tol {
            break;
        }
    }
    if residual >= opts.tol {
        return Err(CoreError::numerical(format!(
            "2D relaxation did not converge in {} iterations; last residuals: {:?}",
            opts.max_iters, history
        )));
    }
    let mut density = Grid2D::uniform(nx, ny, spec.x_max, spec.y_max);
    let area = (spec.x_max / nx as f64) * (spec.y_max / ny as f64);
    for i in 0..nx {
        for j in 0..ny {
            let v = p[i * ny + j].max(0.0);
            density.values[i][j] = Some(v / area);
        }
    }
    Ok(Stationary2DResult {
        density,
        iterations: iters,
        residual,
        dt,
    })
}

/// Backward-equation hitting probabilities for the 1D jump-diffusion in
/// stopping mode: between jumps dx = f dt + sqrt(2 d) dW, hazards q+/q-
/// absorb into price outcomes, reaching 0 absorbs into queue-empty when
/// that boundary is active, and x_max reflects (or absorbs, for first
/// passage to the upper edge).
///
/// This is the independent oracle the Monte Carlo estimates are checked
/// against: a tridiagonal linear solve, no simulation involved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Reflecting,
    Absorbing,
}

#[derive(Debug, Clone, Copy)]
pub struct HittingProblem {
    pub lower: Boundary,
    pub upper: Boundary,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HittingProbs {
    pub queue_empty: f64,
    pub price_up: f64,
    pub price_down: f64,
    pub upper_edge: f64,
}

pub fn hitting_probabilities_1d(
    spec: &ModelSpec1D,
    x0: f64,
    prob: &HittingProblem,
) -> Result<HittingProbs> {
    let n = prob.n;
    let (xs, dx) = centers(n, spec.x_max);
    // backward operator rows: a_i U_{i-1} + b_i U_i + c_i U_{i+1} + src = 0
    let solve_for = |target: usize| -> Result<Vec<f64>> {
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let x = xs[i];
            let f = spec.drift.eval(x);
            let d = spec.diffusion.eval(x);
            let qp = spec.q_plus_at(x);
            let qm = spec.q_minus_at(x);
            // central difference with upwind fallback for positivity
            let (mut al, mut ac, mut ar) = if d > 0.5 * f.abs() * dx {
                (
                    d / (dx * dx) - 0.5 * f / dx,
                    -2.0 * d / (dx * dx),
                    d / (dx * dx) + 0.5 * f / dx,
                )
            } else if f > 0.0 {
                (
                    d / (dx * dx),
                    -2.0 * d / (dx * dx) - f / dx,
                    d / (dx * dx) + f / dx,
                )
            } else {
                (
                    d / (dx * dx) - f / dx,
                    -2.0 * d / (dx * dx) + f / dx,
                    d / (dx * dx),
                )
            };
            // boundaries via ghost elimination
            if i == 0 {
                match prob.lower {
                    Boundary::Reflecting => {
                        ac += al;
                        al = 0.0;
                    }
                    Boundary::Absorbing => {
                        // ghost value is the boundary payoff
                        rhs[i] -= al * if target == 0 { 1.0 } else { 0.0 };
                        al = 0.0;
                    }
                }
            }
            if i == n - 1 {
                match prob.upper {
                    Boundary::Reflecting => {
                        ac += ar;
                        ar = 0.0;
                    }
                    Boundary::Absorbing => {
                        rhs[i] -= ar * if target == 3 { 1.0 } else { 0.0 };
                        ar = 0.0;
                    }
                }
            }
            lo[i] = al;
            di[i] = ac - (qp + qm);
            up[i] = ar;
            rhs[i] -= match target {
                1 => qp,
                2 => qm,
                _ => 0.0,
            };
        }
        crate::numerics::solve_tridiagonal(&lo, &di, &up, &rhs)
    };
    // interpolate the solution at x0
    let interp = |u: &[f64]| -> f64 {
        let pos = (x0 / dx - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        u[i] * (1.0 - t) + u[i + 1] * t
    };
    let mut probs = HittingProbs::default();
    if prob.lower == Boundary::Absorbing {
        probs.queue_empty = interp(&solve_for(0)?);
    }
    probs.price_up = interp(&solve_for(1)?);
    probs.price_down = interp(&solve_for(2)?);
    if prob.upper == Boundary::Absorbing {
        probs.upper_edge = interp(&solve_for(3)?);
    }
    Ok(probs)
}

/// 2D race probabilities from a direct banded solve of the backward
/// equation with killing. Outcomes: bid price down (bid-side depletion
/// hazard) vs ask price up (ask-side depletion hazard); diffusion reflects
/// at all domain edges.
pub fn race_probabilities_2d(
    spec: &ModelSpec2D,
    start: (f64, f64),
    n: usize,
) -> Result<(f64, f64)> {
    let dx = spec.x_max / n as f64;
    let dy = spec.y_max / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dx).collect();
    let ys: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * dy).collect();
    let idx = |i: usize, j: usize| i * n + j;
    let nn = n * n;
    // assemble 5-point stencil rows
    let mut cw = vec![0.0; nn];
    let mut ce = vec![0.0; nn];
    let mut cs = vec![0.0; nn];
    let mut cn = vec![0.0; nn];
    let mut cd = vec![0.0; nn];
    let mut kill = vec![0.0; nn];
    let mut src_bid = vec![0.0; nn];
    let mut src_ask = vec![0.0; nn];
    for i in 0..n {
        for j in 0..n {
            let k = idx(i, j);
            let (x, y) = (xs[i], ys[j]);
            // stopping-mode dynamics: conditional per-side drift and
            // diffusion with the 1/2 event-side factor
            let fx = 0.5 * spec.own_drift_x.eval(x, y);
            let fy = 0.5 * spec.own_drift_y.eval(x, y);
            let dxx = 0.5 * spec.own_diff_x.eval(x, y);
            let dyy = 0.5 * spec.own_diff_y.eval(x, y);
            let qb_m = spec.q_minus.eval(x, y).max(0.0);
            let qa_m = spec.q_minus.eval(y, x).max(0.0);
            let qb_p = spec.q_plus.eval(x, y).max(0.0);
            let qa_p = spec.q_plus.eval(y, x).max(0.0);
            let (mut w, mut e) = if dxx > 0.5 * fx.abs() * dx {
                (
                    dxx / (dx * dx) - 0.5 * fx / dx,
                    dxx / (dx * dx) + 0.5 * fx / dx,
                )
            } else if fx > 0.0 {
                (dxx / (dx * dx), dxx / (dx * dx) + fx / dx)
            } else {
                (dxx / (dx * dx) - fx / dx, dxx / (dx * dx))
            };
            let (mut s, mut nb) = if dyy > 0.5 * fy.abs() * dy {
                (
                    dyy / (dy * dy) - 0.5 * fy / dy,
                    dyy / (dy * dy) + 0.5 * fy / dy,
                )
            } else if fy > 0.0 {
                (dyy / (dy * dy), dyy / (dy * dy) + fy / dy)
            } else {
                (dyy / (dy * dy) - fy / dy, dyy / (dy * dy))
            };
            let mut center = -(w + e + s + nb);
            // reflecting edges: fold the ghost neighbor into the center
            if i == 0 {
                center += w;
                w = 0.0;
            }
            if i == n - 1 {
                center += e;
                e = 0.0;
            }
            if j == 0 {
                center += s;
                s = 0.0;
            }
            if j == n - 1 {
                center += nb;
                nb = 0.0;
            }
            cw[k] = w;
            ce[k] = e;
            cs[k] = s;
            cn[k] = nb;
            kill[k] = qb_m + qa_m + qb_p + qa_p;
            cd[k] = center - kill[k];
            src_bid[k] = qb_m;
            src_ask[k] = qa_m;
        }
    }
    // direct banded solve of the backward system A u = -src; the operator
    // is diagonally dominant (killing plus upwinded advection), so LU
    // without pivoting is stable
    let mut lu = crate::numerics::BandedLu::zeros(nn, n);
    for i in 0..n {
        for j in 0..n {
            let k = idx(i, j);
            lu.add(k, k, cd[k]);
            if i > 0 {
                lu.add(k, k - n, cw[k]);
            }
            if i < n - 1 {
                lu.add(k, k + n, ce[k]);
            }
            if j > 0 {
                lu.add(k, k - 1, cs[k]);
            }
            if j < n - 1 {
                lu.add(k, k + 1, cn[k]);
            }
        }
    }
    lu.factor()
        .map_err(|e| CoreError::numerical(format!("2D hitting solve: {e}")))?;
    let neg = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| -x).collect() };
    let ub = lu.solve(&neg(&src_bid));
    let ua = lu.solve(&neg(&src_ask));
    let interp = |u: &[f64]| -> f64 {
        let px = (start.0 / dx - 0.5).clamp(0.0, (n - 1) as f64);
        let py = (start.1 / dy - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (px.floor() as usize).min(n - 2);
        let j = (py.floor() as usize).min(n - 2);
        let (tx, ty) = (px - i as f64, py - j as f64);
        let f = |a: usize, b: usize| u[idx(a, b)];
        f(i, j) * (1.0 - tx) * (1.0 - ty)
            + f(i + 1, j) * tx * (1.0 - ty)
            + f(i, j + 1) * (1.0 - tx) * ty
            + f(i + 1, j + 1) * tx * ty
    };
    Ok((interp(&ub), interp(&ua)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coef1, Coef2, Dens1, Dens2};

    fn ou_spec(kappa: f64, d0: f64, n: usize, x_max: f64) -> ModelSpec1D {
        ModelSpec1D {
            drift: Coef1::reverting(kappa, 1.0),
            diffusion: Coef1::constant(d0),
            q_plus: Coef1::constant(0.0),
            q_minus: Coef1::constant(0.0),
            p_plus: Dens1::Exponential { mean: 0.2 },
            p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            pi_plus: 0.2,
            x_max,
            n_cells: n,
            drift_correction: None,
        }
    }

    fn jump_spec() -> ModelSpec1D {
        ModelSpec1D {
            drift: Coef1::reverting(0.08, 1.0),
            diffusion: Coef1::constant(0.004),
            q_plus: Coef1::constant(0.02),
            q_minus: Coef1::PiecewiseLinear {
                xs: vec![0.0, 0.5, 8.0],
                ys: vec![0.25, 0.02, 0.02],
            },
            p_plus: Dens1::Exponential { mean: 0.2 },
            p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            pi_plus: 0.2,
            x_max: 6.0,
            n_cells: 512,
            drift_correction: None,
        }
    }

    #[test]
    fn gb_matches_analytic_ou_gaussian() {
        // f = kappa (1 - x), d = d0: stationary law is the domain-truncated
        // Gaussian with mean 1, variance d0 / kappa
        let spec = ou_spec(1.0, 0.5, 1000, 8.0);
        let r = gibbs_boltzmann(&spec).unwrap();
        let var = 0.5;
        let xs = r.centers();
        // independent normalization on the same domain by fine quadrature
        let m = 400_000;
        let h = spec.x_max / m as f64;
        let z: f64 = (0..m)
            .map(|k| {
                let x = (k as f64 + 0.5) * h;
                (-(x - 1.0) * (x - 1.0) / (2.0 * var)).exp() * h
            })
            .sum();
        let mut l1 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let want = (-(x - 1.0) * (x - 1.0) / (2.0 * var)).exp() / z;
            l1 += (r.pst[i] - want).abs() * (spec.x_max / 1000.0);
        }
        assert!(l1 <= 1e-3, "L1 distance to analytic OU law: {l1}");
    }

    #[test]
    fn gb_zero_drift_is_uniform() {
        let mut spec = ou_spec(0.0, 0.3, 256, 4.0);
        spec.drift = Coef1::constant(0.0);
        let r = gibbs_boltzmann(&spec).unwrap();
        for (u, p) in r.potential.iter().zip(&r.pst) {
            assert!(u.abs() < 1e-14);
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn gb_rejects_jumps_and_vanishing_diffusion() {
        let mut spec = ou_spec(1.0, 0.5, 128, 8.0);
        spec.q_plus = Coef1::constant(0.01);
        assert!(gibbs_boltzmann(&spec).is_err());
        let mut spec2 = ou_spec(1.0, 0.5, 128, 8.0);
        spec2.diffusion = Coef1::Linear {
            intercept: -0.01,
            slope: 0.05,
        };
        let err = gibbs_boltzmann(&spec2).unwrap_err();
        assert!(matches!(err, CoreError::Config(_)));
    }

    #[test]
    fn stationary_reduces_to_gb_without_jumps() {
        let spec = ou_spec(1.0, 0.5, 600, 8.0);
        let gb = gibbs_boltzmann(&spec).unwrap();
        let st = stationary_1d(&spec).unwrap();
        let dx = spec.x_max / 600.0;
        let l1: f64 = gb
            .pst
            .iter()
            .zip(&st.pst)
            .map(|(a, b)| (a - b).abs() * dx)
            .sum();
        assert!(l1 <= 1e-8, "L1(gb, stationary) = {l1}");
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        let gen = Generator1D::build(&jump_spec(), 400).unwrap();
        for (i, s) in gen.column_sums().iter().enumerate() {
            assert!(s.abs() <= 1e-12, "column {i} sums to {s}");
        }
    }

    #[test]
    fn stationary_with_jumps_is_nonnegative_and_normalized() {
        let spec = jump_spec();
        let r = stationary_1d(&spec).unwrap();
        let dx = spec.x_max / spec.n_cells as f64;
        let mass: f64 = r.pst.iter().map(|p| p * dx).sum();
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(r.pst.iter().all(|p| *p >= 0.0));
        assert!(r.flux_residual < 1e-10, "residual {}", r.flux_residual);
    }

    #[test]
    fn depletion_at_small_x_moves_mass_away_from_zero() {
        // q- concentrated at small x with the replacement shifted right must
        // deplete the small-x region relative to the jump-free solution;
        // all depletions recede (pi+ = 0) so nothing reinjects near zero
        let spec = ModelSpec1D {
            drift: Coef1::reverting(0.1, 1.0),
            diffusion: Coef1::constant(0.05),
            q_plus: Coef1::constant(0.0),
            q_minus: Coef1::PiecewiseLinear {
                xs: vec![0.0, 0.4, 8.0],
                ys: vec![0.35, 0.0, 0.0],
            },
            p_plus: Dens1::Exponential { mean: 0.2 },
            p_minus: Dens1::TruncNormal { mean: 1.2, sd: 0.3 },
            pi_plus: 0.0,
            x_max: 6.0,
            n_cells: 512,
            drift_correction: None,
        };
        let mut nojump = spec.clone();
        nojump.q_plus = Coef1::constant(0.0);
        nojump.q_minus = Coef1::constant(0.0);
        let with = stationary_1d(&spec).unwrap();
        let without = stationary_1d(&nojump).unwrap();
        let dx = spec.x_max / spec.n_cells as f64;
        let low_mass = |r: &StationaryResult| -> f64 {
            r.pst
                .iter()
                .zip(r.centers())
                .filter(|(_, x)| *x < 0.2)
                .map(|(p, _)| p * dx)
                .sum::<f64>()
        };
        assert!(
            low_mass(&with) < low_mass(&without),
            "jump spec must thin the small-x mass: {} vs {}",
            low_mass(&with),
            low_mass(&without)
        );
    }

    #[test]
    fn refinement_changes_shrink() {
        let spec = jump_spec();
        let r1 = stationary_1d_at(&spec, 128).unwrap();
        let r2 = stationary_1d_at(&spec, 256).unwrap();
        let r3 = stationary_1d_at(&spec, 512).unwrap();
        // compare as masses aggregated onto the coarsest grid
        let agg = |r: &StationaryResult, factor: usize| -> Vec<f64> {
            r.cell_masses()
                .chunks(factor)
                .map(|c| c.iter().sum())
                .collect()
        };
        let a = agg(&r1, 1);
        let b = agg(&r2, 2);
        let c = agg(&r3, 4);
        let l1 =
            |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum() };
        let d12 = l1(&a, &b);
        let d23 = l1(&b, &c);
        assert!(
            d23 < d12,
            "refinement must contract: |p128-p256| = {d12}, |p256-p512| = {d23}"
        );
    }

    fn separable_2d(nx: usize) -> ModelSpec2D {
        ModelSpec2D {
            own_drift_x: Coef2::of_x(Coef1::reverting(0.1, 1.0)),
            own_drift_y: Coef2::of_y(Coef1::reverting(0.1, 1.0)),
            own_diff_x: Coef2::constant(0.01),
            own_diff_y: Coef2::constant(0.01),
            q_plus: Coef2::constant(0.0),
            q_minus: Coef2::constant(0.0),
            p_plus: Dens2::Product {
                x: Dens1::Exponential { mean: 0.2 },
                y: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            },
            p_minus: Dens2::Product {
                x: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
                y: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            },
            pi_plus: 0.2,
            x_max: 4.0,
            y_max: 4.0,
            nx,
            ny: nx,
        }
    }

    #[test]
    fn separable_spec_factorizes_into_1d_solutions() {
        let spec2 = separable_2d(64);
        let r2 = stationary_2d(&spec2, &Solve2DOptions::default()).unwrap();
        // matching 1D model per axis: per-event drift/diffusion carry the
        // same 1/2 side factor as the 2D tilde coefficients
        let spec1 = ModelSpec1D {
            drift: Coef1::reverting(0.05, 1.0),
            diffusion: Coef1::constant(0.005),
            q_plus: Coef1::constant(0.0),
            q_minus: Coef1::constant(0.0),
            p_plus: Dens1::Exponential { mean: 0.2 },
            p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            pi_plus: 0.2,
            x_max: 4.0,
            n_cells: 64,
            drift_correction: None,
        };
        let r1 = stationary_1d(&spec1).unwrap();
        let m1 = r1.cell_masses();
        let mut l1 = 0.0;
        for i in 0..64 {
            for j in 0..64 {
                let have = r2.density.values[i][j].unwrap() * r2.density.cell_area(i, j);
                let want = m1[i] * m1[j];
                l1 += (have - want).abs();
            }
        }
        assert!(l1 <= 1e-3, "L1 to product of 1D solutions: {l1}");
    }

    #[test]
    fn symmetric_spec_gives_symmetric_density() {
        let mut spec = separable_2d(32);
        spec.q_plus = Coef2::constant(0.01);
        spec.q_minus = Coef2::constant(0.02);
        spec.p_minus = Dens2::Product {
            x: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            y: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        };
        // p_plus must be swap-symmetric too for full bid/ask symmetry
        spec.p_plus = Dens2::Product {
            x: Dens1::Exponential { mean: 0.3 },
            y: Dens1::Exponential { mean: 0.3 },
        };
        let r = stationary_2d(&spec, &Solve2DOptions::default()).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let a = r.density.values[i][j].unwrap();
                let b = r.density.values[j][i].unwrap();
                assert!((a - b).abs() <= 1e-10, "asymmetry at ({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn attracting_drift_puts_mode_near_one_one() {
        let spec = separable_2d(32);
        let r = stationary_2d(&spec, &Solve2DOptions::default()).unwrap();
        let mut best = (0, 0);
        let mut bv = f64::NEG_INFINITY;
        for i in 0..32 {
            for j in 0..32 {
                let v = r.density.values[i][j].unwrap();
                if v > bv {
                    bv = v;
                    best = (i, j);
                }
            }
        }
        let bx = r.density.x_center(best.0);
        let by = r.density.y_center(best.1);
        let cell = 4.0 / 32.0;
        assert!(
            (bx - 1.0).abs() <= cell && (by - 1.0).abs() <= cell,
            "mode at ({bx}, {by})"
        );
    }

    #[test]
    fn gamblers_ruin_from_linear_solve() {
        // f = 0, d = 1/2, absorbing at both ends, start at 0.5 of [0, 2]:
        // P(hit 0 first) = 1 - x0 / 2 = 0.75
        let spec = ModelSpec1D {
            drift: Coef1::constant(0.0),
            diffusion: Coef1::constant(0.5),
            q_plus: Coef1::constant(0.0),
            q_minus: Coef1::constant(0.0),
            p_plus: Dens1::Exponential { mean: 0.2 },
            p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            pi_plus: 0.2,
            x_max: 2.0,
            n_cells: 2000,
            drift_correction: None,
        };
        let probs = hitting_probabilities_1d(
            &spec,
            0.5,
            &HittingProblem {
                lower: Boundary::Absorbing,
                upper: Boundary::Absorbing,
                n: 2000,
            },
        )
        .unwrap();
        assert!(
            (probs.queue_empty - 0.75).abs() < 2e-3,
            "ruin probability {}",
            probs.queue_empty
        );
        assert!((probs.queue_empty + probs.upper_edge - 1.0).abs() < 2e-3);
    }

    #[test]
    fn relaxation_reports_non_convergence_with_history() {
        let spec = separable_2d(32);
        let err = stationary_2d(
            &spec,
            &Solve2DOptions {
                tol: 1e-14,
                max_iters: 50,
                safety: 0.9,
            },
        )
        .unwrap_err();
        match err {
            CoreError::Numerical(msg) => {
                assert!(msg.contains("did not converge"), "{msg}")
            }
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_potential_is_rejected_as_non_normalizable() {
        // the max-shift keeps any finite potential normalizable; a NaN
        // drift poisons the integral and must surface as an error
        let mut spec = ou_spec(0.0, 1.0, 128, 8.0);
        spec.drift = Coef1::constant(f64::NAN);
        let err = gibbs_boltzmann(&spec).unwrap_err();
        assert!(matches!(err, CoreError::Numerical(_)), "{err:?}");
    }
}
