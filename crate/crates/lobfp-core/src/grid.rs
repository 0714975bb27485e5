//! Binned grids used by the calibration estimators and the solvers.
//!
//! Values are `Option<f64>`: a bin with fewer samples than the configured
//! minimum stays `None` rather than being zero-filled, and serializes as
//! JSON `null`.

use crate::error::CoreError;
use crate::Result;
use serde::{Deserialize, Serialize};

/// One-dimensional binned quantity over the rescaled volume axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    /// Strictly increasing bin edges, length = bins + 1.
    pub edges: Vec<f64>,
    /// Per-bin value; `None` where the bin is undefined.
    pub values: Vec<Option<f64>>,
    /// Number of samples that contributed to each bin.
    pub counts: Vec<u64>,
    /// Samples above the last edge that were pooled into the last bin.
    #[serde(default)]
    pub overflow: u64,
}

impl Grid1D {
    pub fn uniform(bins: usize, lo: f64, hi: f64) -> Self {
        assert!(bins > 0 && hi > lo);
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
        Grid1D {
            edges,
            values: vec![None; bins],
            counts: vec![0; bins],
            overflow: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.center(i)).collect()
    }

    /// Bin index for `x`; values above the top edge pool into the last bin.
    /// Returns `None` for x below the bottom edge or non-finite x.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !x.is_finite() || x < self.lo() {
            return None;
        }
        if x >= self.hi() {
            return Some(self.bins() - 1);
        }
        // uniform fast path, with a scan fallback for irregular edges
        let b = self.bins();
        let guess = ((x - self.lo()) / (self.hi() - self.lo()) * b as f64) as usize;
        let guess = guess.min(b - 1);
        if self.edges[guess] <= x && x < self.edges[guess + 1] {
            return Some(guess);
        }
        match self.edges.partition_point(|&e| e <= x) {
            0 => None,
            p => Some((p - 1).min(b - 1)),
        }
    }

    pub fn is_overflow(&self, x: f64) -> bool {
        x >= self.hi()
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values[i]
    }

    /// Defined (bin center, value) pairs.
    pub fn defined(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.bins()).filter_map(|i| self.values[i].map(|v| (self.center(i), v)))
    }

    pub fn same_edges(&self, other: &Grid1D) -> bool {
        self.edges == other.edges
    }

    /// Total mass interpreting values as densities: sum of value * width.
    pub fn mass(&self) -> f64 {
        (0..self.bins())
            .map(|i| self.values[i].unwrap_or(0.0) * self.width(i))
            .sum()
    }
}

/// Two-dimensional binned quantity over (x, y) = rescaled (bid, ask).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// values[ix][iy]
    pub values: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<u64>>,
}

impl Grid2D {
    pub fn uniform(nx: usize, ny: usize, x_hi: f64, y_hi: f64) -> Self {
        assert!(nx > 0 && ny > 0);
        let x_edges = (0..=nx).map(|i| x_hi * i as f64 / nx as f64).collect();
        let y_edges = (0..=ny).map(|j| y_hi * j as f64 / ny as f64).collect();
        Grid2D {
            x_edges,
            y_edges,
            values: vec![vec![None; ny]; nx],
            counts: vec![vec![0; ny]; nx],
        }
    }

    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn x_center(&self, i: usize) -> f64 {
        0.5 * (self.x_edges[i] + self.x_edges[i + 1])
    }

    pub fn y_center(&self, j: usize) -> f64 {
        0.5 * (self.y_edges[j] + self.y_edges[j + 1])
    }

    pub fn cell_area(&self, i: usize, j: usize) -> f64 {
        (self.x_edges[i + 1] - self.x_edges[i]) * (self.y_edges[j + 1] - self.y_edges[j])
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ix = bin_1d(&self.x_edges, x)?;
        let iy = bin_1d(&self.y_edges, y)?;
        Some((ix, iy))
    }

    /// Requires uniform spacing on both axes (used by the Poisson solves).
    pub fn uniform_spacing(&self) -> Result<(f64, f64)> {
        let hx = spacing(&self.x_edges)
            .ok_or_else(|| CoreError::config("x edges are not uniformly spaced"))?;
        let hy = spacing(&self.y_edges)
            .ok_or_else(|| CoreError::config("y edges are not uniformly spaced"))?;
        Ok((hx, hy))
    }

    pub fn mass(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                s += self.values[i][j].unwrap_or(0.0) * self.cell_area(i, j);
            }
        }
        s
    }

    /// Dense value matrix with undefined cells filled by the nearest defined
    /// cell (Euclidean distance over cell indices). Errors if nothing is
    /// defined.
    pub fn filled_values(&self) -> Result<Vec<Vec<f64>>> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut out = vec![vec![0.0; ny]; nx];
        let defined: Vec<(usize, usize)> = (0..nx)
            .flat_map(|i| (0..ny).map(move |j| (i, j)))
            .filter(|&(i, j)| self.values[i][j].is_some())
            .collect();
        if defined.is_empty() {
            return Err(CoreError::data("grid has no defined cells"));
        }
        for i in 0..nx {
            for j in 0..ny {
                out[i][j] = match self.values[i][j] {
                    Some(v) => v,
                    None => {
                        let (bi, bj) = *defined
                            .iter()
                            .min_by(|a, b| {
                                let da = d2(**a, (i, j));
                                let db = d2(**b, (i, j));
                                da.partial_cmp(&db).unwrap()
                            })
                            .unwrap();
                        self.values[bi][bj].unwrap()
                    }
                };
            }
        }
        Ok(out)
    }
}

fn d2(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    dx * dx + dy * dy
}

fn bin_1d(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !x.is_finite() || x < edges[0] {
        return None;
    }
    if x >= edges[n] {
        return Some(n - 1);
    }
    match edges.partition_point(|&e| e <= x) {
        0 => None,
        p => Some((p - 1).min(n - 1)),
    }
}

fn spacing(edges: &[f64]) -> Option<f64> {
    let h = edges[1] - edges[0];
    let tol = 1e-9 * h.abs().max(1.0);
    for w in edges.windows(2) {
        if ((w[1] - w[0]) - h).abs() > tol {
            return None;
        }
    }
    Some(h)
}
