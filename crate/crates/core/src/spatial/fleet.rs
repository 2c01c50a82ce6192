use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::{interpolate_with, Field, Mesh};
use super::transport::centred_gradient;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoatMode {
    Fishing,
    Returning,
    Docked,
}

impl BoatMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fishing => "fishing",
            Self::Returning => "returning",
            Self::Docked => "docked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Boat {
    pub pos: [f64; 2],
    pub home: [f64; 2],
    pub mode: BoatMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub boats: usize,
    /// Cruise speed `U_M`.
    pub speed: f64,
    /// Profitability factor: fishing continues while `γ·B(Z) > U_M²`.
    pub gamma: f64,
    /// Standard deviation of the per-step position noise.
    pub sigma_pos: f64,
    /// Homes are spread evenly along the coast over this `y` range.
    pub home_span: [f64; 2],
    /// Radius of the catch kernel in cells.
    pub kernel_cells: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            boats: 50,
            speed: 2.0,
            gamma: 5.0,
            sigma_pos: 0.05,
            home_span: [4.5, 7.5],
            kernel_cells: 2.0,
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0
            && self.gamma >= 0.0
            && self.sigma_pos >= 0.0
            && self.kernel_cells > 0.0)
        {
            return Err(Error::InvalidArgument(
                "fleet needs speed > 0, gamma >= 0, sigma_pos >= 0, kernel_cells > 0".into(),
            ));
        }
        if !(self.home_span[0] <= self.home_span[1]) {
            return Err(Error::InvalidArgument(
                "home_span must be increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fleet {
    pub boats: Vec<Boat>,
    pub speed: f64,
    pub gamma: f64,
    pub sigma_pos: f64,
}

impl Fleet {
    /// Boats start fishing from homes half a cell inside the east coast.
    pub fn new(mesh: &Mesh, cfg: &FleetConfig) -> Result<Self> {
        cfg.validate()?;
        let x = mesh.width() - 0.5 * mesh.h;
        let boats = (0..cfg.boats)
            .map(|i| {
                let s = if cfg.boats == 1 {
                    0.5
                } else {
                    i as f64 / (cfg.boats - 1) as f64
                };
                let y = cfg.home_span[0] + s * (cfg.home_span[1] - cfg.home_span[0]);
                let home = [x, y.clamp(0.5 * mesh.h, mesh.height() - 0.5 * mesh.h)];
                if !mesh.in_sea(home) {
                    return Err(Error::InvalidArgument(format!(
                        "boat {i} home {home:?} is on land"
                    )));
                }
                Ok(Boat {
                    pos: home,
                    home,
                    mode: BoatMode::Fishing,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            boats,
            speed: cfg.speed,
            gamma: cfg.gamma,
            sigma_pos: cfg.sigma_pos,
        })
    }

    pub fn count(&self, mode: BoatMode) -> usize {
        self.boats.iter().filter(|b| b.mode == mode).count()
    }

    /// Profitability rule `γ·B > U_M²`.
    pub fn is_profitable(&self, biomass_at_boat: f64) -> bool {
        self.gamma * biomass_at_boat > self.speed * self.speed
    }
}

/// Mirror a point back into the box.
fn reflect_box(mesh: &Mesh, mut p: [f64; 2]) -> [f64; 2] {
    let ext = [mesh.width(), mesh.height()];
    for a in 0..2 {
        if p[a] < 0.0 {
            p[a] = -p[a];
        }
        if p[a] > ext[a] {
            p[a] = 2.0 * ext[a] - p[a];
        }
        p[a] = p[a].clamp(0.0, ext[a]);
    }
    p
}

/// Move by `d`, reflecting at the box edges and, against land, flipping the
/// offending displacement components. A boat with no admissible move stays.
fn displace(mesh: &Mesh, p: [f64; 2], d: [f64; 2]) -> [f64; 2] {
    for s in [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]] {
        let q = reflect_box(mesh, [p[0] + s[0] * d[0], p[1] + s[1] * d[1]]);
        if mesh.in_sea(q) {
            return q;
        }
    }
    p
}

/// Biomass gradient at a point, bilinear in the centred cell gradients.
pub fn biomass_gradient(mesh: &Mesh, b: &Field, p: [f64; 2]) -> [f64; 2] {
    let gx = interpolate_with(mesh, p, |k| centred_gradient(mesh, &b.values, k)[0]);
    let gy = interpolate_with(mesh, p, |k| centred_gradient(mesh, &b.values, k)[1]);
    [gx, gy]
}

/// Advance every boat by one step.
///
/// Fishing boats that fail the profitability rule turn for home; the others
/// move `U_M·dt` along the unit biomass gradient (no deterministic motion
/// where the gradient vanishes) plus Gaussian noise. Returning boats head
/// straight home at `U_M` and dock on arrival. Boat `i` at step `step`
/// draws from its own substream of `seed`.
pub fn step_fleet(fleet: &Fleet, mesh: &Mesh, b: &Field, dt: f64, seed: u64, step: u64) -> Fleet {
    let reach = fleet.speed * dt;
    let boats = fleet
        .boats
        .par_iter()
        .enumerate()
        .map(|(i, boat)| {
            let mut boat = *boat;
            if boat.mode == BoatMode::Fishing && !fleet.is_profitable(b.interpolate(mesh, boat.pos))
            {
                boat.mode = BoatMode::Returning;
            }
            match boat.mode {
                BoatMode::Docked => {}
                BoatMode::Returning => {
                    let d = [boat.home[0] - boat.pos[0], boat.home[1] - boat.pos[1]];
                    let dist = d[0].hypot(d[1]);
                    if dist <= reach {
                        boat.pos = boat.home;
                        boat.mode = BoatMode::Docked;
                    } else {
                        boat.pos =
                            displace(mesh, boat.pos, [reach * d[0] / dist, reach * d[1] / dist]);
                    }
                }
                BoatMode::Fishing => {
                    let g = biomass_gradient(mesh, b, boat.pos);
                    let norm = g[0].hypot(g[1]);
                    let mut d = if norm > 1e-12 {
                        [reach * g[0] / norm, reach * g[1] / norm]
                    } else {
                        [0.0, 0.0]
                    };
                    if fleet.sigma_pos > 0.0 {
                        let mut r = rng::substream2(seed, step, i as u64);
                        d[0] += fleet.sigma_pos * rng::normal(&mut r);
                        d[1] += fleet.sigma_pos * rng::normal(&mut r);
                    }
                    boat.pos = displace(mesh, boat.pos, d);
                }
            }
            boat
        })
        .collect();
    Fleet {
        boats,
        ..fleet.clone()
    }
}

/// Harvest rate per cell: each fishing boat removes at rate `q` through a
/// hat kernel of radius `radius`, normalised to unit integral over the sea.
pub fn catch_field(mesh: &Mesh, fleet: &Fleet, q: f64, radius: f64) -> Field {
    let mut out = Field::zeros(mesh);
    if q == 0.0 {
        return out;
    }
    let reach = (radius / mesh.h).ceil() as isize + 1;
    for boat in fleet.boats.iter().filter(|b| b.mode == BoatMode::Fishing) {
        let Some(home_cell) = mesh.locate(boat.pos) else {
            continue;
        };
        let (ci, cj) = (
            (home_cell % mesh.nx) as isize,
            (home_cell / mesh.nx) as isize,
        );
        let mut cells = vec![];
        let mut total = 0.0;
        for j in (cj - reach).max(0)..=(cj + reach).min(mesh.ny as isize - 1) {
            for i in (ci - reach).max(0)..=(ci + reach).min(mesh.nx as isize - 1) {
                let k = mesh.idx(i as usize, j as usize);
                if !mesh.sea[k] {
                    continue;
                }
                let c = mesh.center(k);
                let w = (1.0 - (c[0] - boat.pos[0]).hypot(c[1] - boat.pos[1]) / radius).max(0.0);
                if w > 0.0 {
                    cells.push((k, w));
                    total += w;
                }
            }
        }
        if total == 0.0 {
            cells = vec![(home_cell, 1.0)];
            total = 1.0;
        }
        let scale = q / (total * mesh.cell_area());
        for (k, w) in cells {
            out.values[k] += scale * w;
        }
    }
    out
}
