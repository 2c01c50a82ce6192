use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned land block, `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandRect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub width: f64,
    pub height: f64,
    /// Cells along the longer side.
    pub cells: usize,
    pub land: Vec<LandRect>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            width: 6.0,
            height: 12.0,
            cells: 100,
            land: vec![],
        }
    }
}

/// Cell-centred lattice over `[0, width] × [0, height]` with a sea mask.
///
/// Γ₁ is the top edge, Γ₂ the bottom edge, the coast is the east edge
/// `x = width` and the west edge is open sea. Cell `(i, j)` has flat index
/// `i + nx·j` and centre `((i + ½)h, (j + ½)h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub sea: Vec<bool>,
}

/// Neighbour slots in the order west, east, south, north.
pub const WEST: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const NORTH: usize = 3;

impl Mesh {
    pub fn from_config(cfg: &MeshConfig) -> Result<Self> {
        if !(cfg.width > 0.0 && cfg.height > 0.0) || cfg.cells < 4 {
            return Err(Error::InvalidArgument(
                "mesh needs positive extents and at least 4 cells".into(),
            ));
        }
        let h = cfg.width.max(cfg.height) / cfg.cells as f64;
        let nx = (cfg.width / h).round() as usize;
        let ny = (cfg.height / h).round() as usize;
        if ((nx as f64 * h) - cfg.width).abs() > 1e-9 * cfg.width
            || ((ny as f64 * h) - cfg.height).abs() > 1e-9 * cfg.height
        {
            return Err(Error::InvalidArgument(format!(
                "extents {}×{} are not multiples of the spacing {h}",
                cfg.width, cfg.height
            )));
        }
        let mut sea = vec![true; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                if cfg
                    .land
                    .iter()
                    .any(|r| x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1)
                {
                    sea[i + nx * j] = false;
                }
            }
        }
        Self::new(nx, ny, h, sea)
    }

    pub fn new(nx: usize, ny: usize, h: f64, sea: Vec<bool>) -> Result<Self> {
        let m = Self { nx, ny, h, sea };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sea.len() != self.nx * self.ny || !(self.h > 0.0) {
            return Err(Error::InvalidArgument(
                "mask size or spacing inconsistent".into(),
            ));
        }
        let top = (0..self.nx).any(|i| self.sea[self.idx(i, self.ny - 1)]);
        let bottom = (0..self.nx).any(|i| self.sea[self.idx(i, 0)]);
        if !top || !bottom {
            return Err(Error::InvalidArgument(
                "upper and lower boundaries need sea cells".into(),
            ));
        }
        let start = self.sea.iter().position(|&s| s).expect("top row has sea");
        let mut seen = vec![false; self.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for nb in self.neighbours(k).into_iter().flatten() {
                if !seen[nb] {
                    seen[nb] = true;
                    count += 1;
                    queue.push_back(nb);
                }
            }
        }
        if count != self.sea_count() {
            return Err(Error::InvalidArgument(format!(
                "sea region is not connected ({count} of {} cells reachable)",
                self.sea_count()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sea.is_empty()
    }

    pub fn sea_count(&self) -> usize {
        self.sea.iter().filter(|&&s| s).count()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.nx as f64 * self.h
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.ny as f64 * self.h
    }

    #[inline]
    pub fn center(&self, k: usize) -> [f64; 2] {
        [
            ((k % self.nx) as f64 + 0.5) * self.h,
            ((k / self.nx) as f64 + 0.5) * self.h,
        ]
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Sea neighbours in the order west, east, south, north.
    pub fn neighbours(&self, k: usize) -> [Option<usize>; 4] {
        let (i, j) = (k % self.nx, k / self.nx);
        let pick = |c: Option<usize>| c.filter(|&c| self.sea[c]);
        [
            pick((i > 0).then(|| k - 1)),
            pick((i + 1 < self.nx).then(|| k + 1)),
            pick((j > 0).then(|| k - self.nx)),
            pick((j + 1 < self.ny).then(|| k + self.nx)),
        ]
    }

    /// Cell holding a point, if the point lies inside the box.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        if !(p[0] >= 0.0 && p[0] <= self.width() && p[1] >= 0.0 && p[1] <= self.height()) {
            return None;
        }
        let i = ((p[0] / self.h) as usize).min(self.nx - 1);
        let j = ((p[1] / self.h) as usize).min(self.ny - 1);
        Some(self.idx(i, j))
    }

    pub fn in_sea(&self, p: [f64; 2]) -> bool {
        self.locate(p).is_some_and(|k| self.sea[k])
    }
}

/// Cell values of a scalar on a [`Mesh`]. Land entries are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.len()],
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            values: (0..mesh.len())
                .map(|k| if mesh.sea[k] { f(mesh.center(k)) } else { 0.0 })
                .collect(),
        }
    }

    /// Cell-area quadrature over the sea.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        mesh.cell_area()
            * self
                .values
                .iter()
                .zip(&mesh.sea)
                .filter(|(_, &s)| s)
                .map(|(v, _)| v)
                .sum::<f64>()
    }

    pub fn is_finite(&self, mesh: &Mesh) -> bool {
        self.values
            .iter()
            .zip(&mesh.sea)
            .all(|(v, &s)| !s || v.is_finite())
    }

    pub fn min_sea(&self, mesh: &Mesh) -> f64 {
        self.values
            .iter()
            .zip(&mesh.sea)
            .filter(|(_, &s)| s)
            .fold(f64::INFINITY, |m, (v, _)| m.min(*v))
    }

    pub fn max_sea(&self, mesh: &Mesh) -> f64 {
        self.values
            .iter()
            .zip(&mesh.sea)
            .filter(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, |m, (v, _)| m.max(*v))
    }

    /// Bilinear interpolation between sea-cell centres, clamped at the box
    /// edges. Land corners fall back to the cell holding the point.
    pub fn interpolate(&self, mesh: &Mesh, p: [f64; 2]) -> f64 {
        interpolate_with(mesh, p, |k| self.values[k])
    }
}

pub(crate) fn interpolate_with(mesh: &Mesh, p: [f64; 2], value: impl Fn(usize) -> f64) -> f64 {
    let fx = (p[0] / mesh.h - 0.5).clamp(0.0, (mesh.nx - 1) as f64);
    let fy = (p[1] / mesh.h - 0.5).clamp(0.0, (mesh.ny - 1) as f64);
    let (i0, j0) = (
        (fx as usize).min(mesh.nx.saturating_sub(2)),
        (fy as usize).min(mesh.ny.saturating_sub(2)),
    );
    let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
    let corners = [
        (mesh.idx(i0, j0), (1.0 - tx) * (1.0 - ty)),
        (mesh.idx(i0 + 1, j0), tx * (1.0 - ty)),
        (mesh.idx(i0, j0 + 1), (1.0 - tx) * ty),
        (mesh.idx(i0 + 1, j0 + 1), tx * ty),
    ];
    if corners.iter().all(|&(k, _)| mesh.sea[k]) {
        return corners.iter().map(|&(k, w)| w * value(k)).sum();
    }
    let (mut acc, mut wsum) = (0.0, 0.0);
    for &(k, w) in &corners {
        if mesh.sea[k] {
            acc += w * value(k);
            wsum += w;
        }
    }
    if wsum > 1e-12 {
        acc / wsum
    } else {
        mesh.locate(p).map_or(0.0, &value)
    }
}
