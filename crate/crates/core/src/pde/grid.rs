use serde::{Deserialize, Serialize};

use crate::error::PdeError;

/// Uniform node grid on `[x_min, x_max] x [y_min, y_max]`, boundary nodes
/// included. Values outside the grid are taken as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

pub const MIN_NODES: usize = 16;

impl Grid2D {
    pub fn new(
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
    ) -> Result<Self, PdeError> {
        let g = Self {
            x_min: x_range.0,
            x_max: x_range.1,
            y_min: y_range.0,
            y_max: y_range.1,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        if self.nx < MIN_NODES || self.ny < MIN_NODES {
            return Err(PdeError::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(PdeError::InvalidGrid("empty coordinate range".into()));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index, x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x_min + i as f64 * self.hx(),
            self.y_min + j as f64 * self.hy(),
        ]
    }

    /// Node whose control volume contains `p`, if inside the grid.
    pub fn locate(&self, p: &[f64]) -> Option<(usize, usize)> {
        let fi = ((p[0] - self.x_min) / self.hx()).round();
        let fj = ((p[1] - self.y_min) / self.hy()).round();
        if !(fi >= 0.0 && fj >= 0.0) || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
}

/// Nodal values of a scalar (1 component) or vector (2 component) field.
/// Component `c` of node `k` lives at `values[c * len + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid2D,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Grid2D, components: usize) -> Self {
        Self {
            grid,
            components,
            values: vec![0.0; components * grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, components: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid, components);
        let n = grid.len();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = f(grid.node(i, j));
                let k = grid.index(i, j);
                for c in 0..components {
                    out.values[c * n + k] = v[c];
                }
            }
        }
        out
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Integral of component `c` (sum times cell area).
    pub fn mass(&self, c: usize) -> f64 {
        self.component(c).iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Pointwise Euclidean norm over components.
    pub fn magnitude(&self) -> Vec<f64> {
        let n = self.grid.len();
        (0..n)
            .map(|k| {
                (0..self.components)
                    .map(|c| self.values[c * n + k].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Node index of the largest magnitude.
    pub fn argmax_magnitude(&self) -> (usize, usize) {
        let m = self.magnitude();
        let k = m
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
            )
            .0;
        (k % self.grid.nx, k / self.grid.nx)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sums over `factor x factor` blocks of nodes. The coarse nodes sit at
    /// the block centres; both node counts must be multiples of `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<GridField, PdeError> {
        let g = self.grid;
        if factor == 0 || !g.nx.is_multiple_of(factor) || !g.ny.is_multiple_of(factor) {
            return Err(PdeError::InvalidGrid(format!(
                "{}x{} nodes do not split into blocks of {factor}",
                g.nx, g.ny
            )));
        }
        let (nx, ny) = (g.nx / factor, g.ny / factor);
        let off = (factor - 1) as f64 / 2.0;
        let x_min = g.x_min + off * g.hx();
        let y_min = g.y_min + off * g.hy();
        let coarse = Grid2D {
            x_min,
            x_max: x_min + ((nx - 1) * factor) as f64 * g.hx(),
            y_min,
            y_max: y_min + ((ny - 1) * factor) as f64 * g.hy(),
            nx,
            ny,
        };
        coarse.validate()?;
        let mut out = GridField::zeros(coarse, self.components);
        let (n, m) = (g.len(), coarse.len());
        for c in 0..self.components {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    out.values[c * m + coarse.index(i / factor, j / factor)] +=
                        self.values[c * n + g.index(i, j)];
                }
            }
        }
        Ok(out)
    }
}
