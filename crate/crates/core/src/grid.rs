//! Uniform cell-centred grid on a truncated biomass box and nodal control
//! fields with bilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × n` cell-centred nodes covering `[lo, hi]²`.
///
/// Node `(i, j)` sits at `(lo + (i + ½)h, lo + (j + ½)h)` and owns the
/// control volume of side `h` around it. Flat index is `i + n·j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid2D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let g = Self { lo, hi, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo >= 0.0) || !(self.hi > self.lo) {
            return Err(Error::InvalidArgument(format!(
                "grid box must satisfy 0 <= lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.n < 8 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 8 nodes per axis, got {}",
                self.n
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.h()
    }

    /// Position of the face between node `i-1` and node `i` (`i` in `0..=n`).
    #[inline]
    pub fn face(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    #[inline]
    pub fn node(&self, k: usize) -> [f64; 2] {
        [self.coord(k % self.n), self.coord(k / self.n)]
    }

    /// Cell area, the quadrature weight of every node.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }

    /// Locate `x` between nodes: returns the lower node index and the
    /// interpolation weight of the upper node. Positions beyond the outer
    /// nodes are clamped; the flag tells whether clamping happened.
    fn locate(&self, x: f64) -> (usize, f64, bool) {
        let s = (x - self.lo) / self.h() - 0.5;
        let max = (self.n - 1) as f64;
        if s <= 0.0 {
            (0, 0.0, s < 0.0)
        } else if s >= max {
            (self.n - 2, 1.0, s > max)
        } else {
            let i = (s.floor() as usize).min(self.n - 2);
            (i, s - i as f64, false)
        }
    }
}

/// Nodal values of a d-component field (one layer per species) on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid2D,
    pub values: Vec<Vec<f64>>,
}

impl GridField {
    pub fn constant(grid: Grid2D, components: &[f64]) -> Self {
        let values = components.iter().map(|&c| vec![c; grid.len()]).collect();
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid2D, d: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut values = vec![vec![0.0; grid.len()]; d];
        for k in 0..grid.len() {
            let v = f(grid.node(k));
            for (layer, x) in values.iter_mut().zip(v) {
                layer[k] = x;
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.values.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            grid: self.grid,
            values: vec![vec![0.0; self.grid.len()]; self.components()],
        }
    }

    /// Bilinear interpolation at biomass point `b` (only the first two
    /// coordinates are used). Outside the node hull the field is extended
    /// by its boundary values.
    pub fn interpolate(&self, b: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (i, wx, _) = g.locate(b[0]);
        let (j, wy, _) = g.locate(b[1]);
        let (k00, k10, k01, k11) = (
            g.idx(i, j),
            g.idx(i + 1, j),
            g.idx(i, j + 1),
            g.idx(i + 1, j + 1),
        );
        self.values
            .iter()
            .map(|v| {
                (1.0 - wx) * (1.0 - wy) * v[k00]
                    + wx * (1.0 - wy) * v[k10]
                    + (1.0 - wx) * wy * v[k01]
                    + wx * wy * v[k11]
            })
            .collect()
    }

    /// Gradient of the bilinear interpolant at `b`, per component:
    /// `[∂/∂B1, ∂/∂B2]`. Zero along an axis where `b` lies outside the hull.
    pub fn gradient(&self, b: &[f64]) -> Vec<[f64; 2]> {
        let g = &self.grid;
        let h = g.h();
        let (i, wx, cx) = g.locate(b[0]);
        let (j, wy, cy) = g.locate(b[1]);
        let (k00, k10, k01, k11) = (
            g.idx(i, j),
            g.idx(i + 1, j),
            g.idx(i, j + 1),
            g.idx(i + 1, j + 1),
        );
        self.values
            .iter()
            .map(|v| {
                let dx = if cx {
                    0.0
                } else {
                    ((1.0 - wy) * (v[k10] - v[k00]) + wy * (v[k11] - v[k01])) / h
                };
                let dy = if cy {
                    0.0
                } else {
                    ((1.0 - wx) * (v[k01] - v[k00]) + wx * (v[k11] - v[k10])) / h
                };
                [dx, dy]
            })
            .collect()
    }

    /// Componentwise clamp onto `[lo, hi]`.
    pub fn project(&self, lo: f64, hi: f64) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| x.clamp(lo, hi)).collect())
                .collect(),
        }
    }

    /// Euclidean inner product over all nodes and components.
    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// `self + s·dir`.
    pub fn axpy(&self, s: f64, dir: &Self) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&dir.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_affine_fields() {
        let g = Grid2D::new(0.0, 3.0, 12).unwrap();
        let f = GridField::from_fn(g, 2, |[x, y]| vec![0.3 + 0.5 * x - 0.2 * y, 1.0 + y]);
        for b in [[0.7, 1.9], [1.51, 0.33], [2.6, 2.2]] {
            let v = f.interpolate(&b);
            assert!((v[0] - (0.3 + 0.5 * b[0] - 0.2 * b[1])).abs() < 1e-12);
            assert!((v[1] - (1.0 + b[1])).abs() < 1e-12);
            let gr = f.gradient(&b);
            assert!((gr[0][0] - 0.5).abs() < 1e-12 && (gr[0][1] + 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_hull_is_flat() {
        let g = Grid2D::new(0.0, 3.0, 10).unwrap();
        let f = GridField::from_fn(g, 1, |[x, _]| vec![x]);
        assert_eq!(f.interpolate(&[5.0, 1.0])[0], g.coord(9));
        assert_eq!(f.gradient(&[5.0, 1.0])[0][0], 0.0);
        assert_eq!(f.interpolate(&[0.0, 1.0])[0], g.coord(0));
    }

    #[test]
    fn rejects_coarse_or_negative_boxes() {
        assert!(Grid2D::new(0.0, 3.0, 4).is_err());
        assert!(Grid2D::new(-1.0, 3.0, 10).is_err());
    }
}
