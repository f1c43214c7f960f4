//! Polar grid over the atomic disk p2² + q2² ≤ 4 used for Lyapunov maps and Husimi sections.

use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub r: f64,
    pub theta: f64,
    pub q2: f64,
    pub p2: f64,
    /// r·Δr·Δθ
    pub area: f64,
}

impl PolarGrid {
    pub const R_MAX: f64 = 2.0;

    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r == 0 {
            return Err(DickeError::param("n_r", "must be positive"));
        }
        if n_theta == 0 || !n_theta.is_multiple_of(2) {
            return Err(DickeError::param("n_theta", "must be positive and even so every cell has a mirror"));
        }
        Ok(Self { n_r, n_theta })
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dr(&self) -> f64 {
        Self::R_MAX / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        std::f64::consts::TAU / self.n_theta as f64
    }

    pub fn cell(&self, index: usize) -> GridCell {
        let (ir, it) = (index / self.n_theta, index % self.n_theta);
        let r = (ir as f64 + 0.5) * self.dr();
        let theta = (it as f64 + 0.5) * self.dtheta();
        GridCell {
            index,
            r,
            theta,
            q2: r * theta.cos(),
            p2: r * theta.sin(),
            area: r * self.dr() * self.dtheta(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.len()).map(|i| self.cell(i))
    }

    /// Cell at (−q2, −p2), i.e. θ → θ + π.
    pub fn mirror(&self, index: usize) -> usize {
        let (ir, it) = (index / self.n_theta, index % self.n_theta);
        ir * self.n_theta + (it + self.n_theta / 2) % self.n_theta
    }

    /// Total area π·R² covered by the grid (exact for midpoint cells).
    pub fn total_area(&self) -> f64 {
        self.cells().map(|c| c.area).sum()
    }
}

/// Per-cell values; `None` marks cells outside the energy shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGridField<T> {
    pub grid: PolarGrid,
    pub values: Vec<Option<T>>,
}

impl<T: Copy> PolarGridField<T> {
    pub fn accessible(&self) -> impl Iterator<Item = (GridCell, T)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (self.grid.cell(i), v)))
    }

    pub fn accessible_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}
