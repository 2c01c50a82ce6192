use serde::{Deserialize, Serialize};

use super::mesh::{Field, Mesh, EAST, NORTH, SOUTH, WEST};
use crate::error::{Error, Result};

const CG_TOL: f64 = 1e-12;

/// Boundary condition for plankton diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanktonBoundary {
    #[default]
    Neumann,
    /// `P = 0` on the box edges and along land.
    Dirichlet,
}

/// Velocity sampled on cell faces (normal component) and at cell centres.
///
/// `face_x[i + (nx+1)j]` is the face west of cell `(i, j)`;
/// `face_y[i + nx·j]` the face south of it. Faces against land and on the
/// walls carry zero; only Γ₁ and Γ₂ faces may carry flow out of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub face_x: Vec<f64>,
    pub face_y: Vec<f64>,
    pub cell: Vec<[f64; 2]>,
}

impl VelocityField {
    pub fn zero(mesh: &Mesh) -> Self {
        Self {
            face_x: vec![0.0; (mesh.nx + 1) * mesh.ny],
            face_y: vec![0.0; mesh.nx * (mesh.ny + 1)],
            cell: vec![[0.0; 2]; mesh.len()],
        }
    }

    /// Normal velocities on the four faces of cell `k`, positive outward,
    /// in the order west, east, south, north.
    #[inline]
    fn outward(&self, mesh: &Mesh, k: usize) -> [f64; 4] {
        let (i, j) = (k % mesh.nx, k / mesh.nx);
        let fx = i + (mesh.nx + 1) * j;
        let fy = i + mesh.nx * j;
        [
            -self.face_x[fx],
            self.face_x[fx + 1],
            -self.face_y[fy],
            self.face_y[fy + mesh.nx],
        ]
    }

    pub fn max_speed(&self) -> f64 {
        self.face_x
            .iter()
            .chain(&self.face_y)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Gradient of a potential scaled by `scale` with closed walls: face
/// differences for transport, face averages at cell centres.
pub fn potential_velocity(mesh: &Mesh, phi: &Field, scale: f64) -> VelocityField {
    let (nx, ny, h) = (mesh.nx, mesh.ny, mesh.h);
    let mut v = VelocityField::zero(mesh);
    for j in 0..ny {
        for i in 1..nx {
            let (a, b) = (mesh.idx(i - 1, j), mesh.idx(i, j));
            if mesh.sea[a] && mesh.sea[b] {
                v.face_x[i + (nx + 1) * j] = scale * (phi.values[b] - phi.values[a]) / h;
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (a, b) = (mesh.idx(i, j - 1), mesh.idx(i, j));
            if mesh.sea[a] && mesh.sea[b] {
                v.face_y[i + nx * j] = scale * (phi.values[b] - phi.values[a]) / h;
            }
        }
    }
    fill_cell_velocity(mesh, &mut v);
    v
}

fn fill_cell_velocity(mesh: &Mesh, v: &mut VelocityField) {
    let nx = mesh.nx;
    for k in (0..mesh.len()).filter(|&k| mesh.sea[k]) {
        let (i, j) = (k % nx, k / nx);
        let fx = i + (nx + 1) * j;
        let fy = i + nx * j;
        v.cell[k] = [
            0.5 * (v.face_x[fx] + v.face_x[fx + 1]),
            0.5 * (v.face_y[fy] + v.face_y[fy + nx]),
        ];
    }
}

pub(crate) fn centred_gradient(mesh: &Mesh, f: &[f64], k: usize) -> [f64; 2] {
    let nb = mesh.neighbours(k);
    let axis = |lo: Option<usize>, hi: Option<usize>| match (lo, hi) {
        (Some(a), Some(b)) => (f[b] - f[a]) / (2.0 * mesh.h),
        (Some(a), None) => (f[k] - f[a]) / mesh.h,
        (None, Some(b)) => (f[b] - f[k]) / mesh.h,
        (None, None) => 0.0,
    };
    [axis(nb[WEST], nb[EAST]), axis(nb[SOUTH], nb[NORTH])]
}

/// Harmonic stream potential and the Dirichlet data it satisfies on Γ₁
/// (`top`) and Γ₂ (`bottom`), one value per column.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPotential {
    pub psi: Field,
    pub top: Vec<f64>,
    pub bottom: Vec<f64>,
}

impl StreamPotential {
    /// `scale·∇ψ`, including the normal flow through Γ₁ and Γ₂.
    pub fn velocity(&self, mesh: &Mesh, scale: f64) -> VelocityField {
        let (nx, ny) = (mesh.nx, mesh.ny);
        let half = 0.5 * mesh.h;
        let mut v = potential_velocity(mesh, &self.psi, scale);
        for i in 0..nx {
            let (kt, kb) = (mesh.idx(i, ny - 1), mesh.idx(i, 0));
            if mesh.sea[kt] {
                v.face_y[i + nx * ny] = scale * (self.top[i] - self.psi.values[kt]) / half;
            }
            if mesh.sea[kb] {
                v.face_y[i] = scale * (self.psi.values[kb] - self.bottom[i]) / half;
            }
        }
        fill_cell_velocity(mesh, &mut v);
        v
    }
}

/// Sea current `amplitude · cos(frequency · t) · ∇ψ`.
pub fn current_velocity(
    mesh: &Mesh,
    stream: &StreamPotential,
    t: f64,
    amplitude: f64,
    frequency: f64,
) -> VelocityField {
    stream.velocity(mesh, amplitude * (frequency * t).cos())
}

/// Discrete divergence of the face velocities.
pub fn divergence(mesh: &Mesh, v: &VelocityField) -> Field {
    let mut out = Field::zeros(mesh);
    for k in (0..mesh.len()).filter(|&k| mesh.sea[k]) {
        out.values[k] = v.outward(mesh, k).iter().sum::<f64>() / mesh.h;
    }
    out
}

/// Largest per-cell fraction moved by one explicit upwind step.
pub fn transport_cfl(mesh: &Mesh, v: &VelocityField, dt: f64) -> f64 {
    (0..mesh.len())
        .filter(|&k| mesh.sea[k])
        .map(|k| {
            let w = v.outward(mesh, k);
            let out: f64 = w.iter().map(|x| x.max(0.0)).sum();
            let inflow: f64 = w.iter().map(|x| (-x).max(0.0)).sum();
            out.max(inflow)
        })
        .fold(0.0_f64, f64::max)
        * dt
        / mesh.h
}

fn check_cfl(mesh: &Mesh, v: &VelocityField, dt: f64) -> Result<()> {
    let cfl = transport_cfl(mesh, v, dt);
    if cfl > 1.0 {
        return Err(Error::Stability {
            cfl,
            suggested_dt: 0.9 * dt / cfl,
        });
    }
    Ok(())
}

/// Positive operator `Σ_nb (x_k − x_nb)/h² + wall_k·x_k/h²` on sea cells.
fn apply_laplacian(mesh: &Mesh, wall: &[f64], x: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / mesh.cell_area();
    for k in 0..mesh.len() {
        if !mesh.sea[k] {
            out[k] = 0.0;
            continue;
        }
        let mut acc = wall[k] * x[k];
        for nb in mesh.neighbours(k).into_iter().flatten() {
            acc += x[k] - x[nb];
        }
        out[k] = acc * inv_h2;
    }
}

fn laplacian_diagonal(mesh: &Mesh, wall: &[f64]) -> Vec<f64> {
    (0..mesh.len())
        .map(|k| {
            if mesh.sea[k] {
                (wall[k] + mesh.neighbours(k).iter().flatten().count() as f64) / mesh.cell_area()
            } else {
                0.0
            }
        })
        .collect()
}

fn dot(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(&mesh.sea)
        .filter(|(_, &s)| s)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Jacobi-preconditioned conjugate gradients on the sea cells. Returns the
/// final relative residual.
fn conjugate_gradient(
    mesh: &Mesh,
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = mesh.len();
    let bnorm = dot(mesh, rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0.0);
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = (0..n)
        .map(|k| if mesh.sea[k] { rhs[k] - ax[k] } else { 0.0 })
        .collect();
    let mut z: Vec<f64> = (0..n)
        .map(|k| if mesh.sea[k] { r[k] / diag[k] } else { 0.0 })
        .collect();
    let mut p = z.clone();
    let mut rz = dot(mesh, &r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(mesh, &r, &r).sqrt() / bnorm;
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(res);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(mesh, &p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = dot(mesh, &r, &r).sqrt() / bnorm;
        for k in 0..n {
            z[k] = if mesh.sea[k] { r[k] / diag[k] } else { 0.0 };
        }
        let rz_new = dot(mesh, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if res <= tol {
        Ok(res)
    } else {
        Err(Error::NonConvergence { residual: res })
    }
}

/// Solves `(I + dt·c·L) x = rhs` with `L` the positive Laplacian.
fn implicit_diffusion(
    mesh: &Mesh,
    wall: &[f64],
    coef: f64,
    dt: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    if coef == 0.0 {
        return Ok(rhs.to_vec());
    }
    let s = coef * dt;
    let diag: Vec<f64> = laplacian_diagonal(mesh, wall)
        .iter()
        .map(|d| 1.0 + s * d)
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        apply_laplacian(mesh, wall, x, out);
        for k in 0..mesh.len() {
            out[k] = if mesh.sea[k] { x[k] + s * out[k] } else { 0.0 };
        }
    };
    let mut x = rhs.to_vec();
    conjugate_gradient(mesh, apply, &diag, rhs, &mut x, CG_TOL, 10 * mesh.len())?;
    Ok(x)
}

/// Harmonic ψ with `ψ = top(x)` on Γ₁, `ψ = bottom(x)` on Γ₂ and zero normal
/// derivative on the remaining edges and along land.
///
/// Dirichlet data sit on the boundary faces (ghost-cell reflection). Fails
/// when the relative residual stays above `1e-8`.
pub fn solve_stream_potential(
    mesh: &Mesh,
    top: impl Fn(f64) -> f64,
    bottom: impl Fn(f64) -> f64,
) -> Result<StreamPotential> {
    let (nx, ny) = (mesh.nx, mesh.ny);
    let mut wall = vec![0.0; mesh.len()];
    let mut rhs = vec![0.0; mesh.len()];
    let inv_h2 = 1.0 / mesh.cell_area();
    let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * mesh.h).collect();
    let (top, bottom): (Vec<f64>, Vec<f64>) = (
        xs.iter().map(|&x| top(x)).collect(),
        xs.iter().map(|&x| bottom(x)).collect(),
    );
    for i in 0..nx {
        for (k, g) in [(mesh.idx(i, ny - 1), top[i]), (mesh.idx(i, 0), bottom[i])] {
            if mesh.sea[k] {
                wall[k] += 2.0;
                rhs[k] += 2.0 * g * inv_h2;
            }
        }
    }
    let diag = laplacian_diagonal(mesh, &wall);
    let mut psi = vec![0.0; mesh.len()];
    conjugate_gradient(
        mesh,
        |x, out| apply_laplacian(mesh, &wall, x, out),
        &diag,
        &rhs,
        &mut psi,
        1e-11,
        20 * mesh.len(),
    )?;
    let mut check = vec![0.0; mesh.len()];
    apply_laplacian(mesh, &wall, &psi, &mut check);
    let bnorm = dot(mesh, &rhs, &rhs).sqrt();
    if bnorm > 0.0 {
        let r: Vec<f64> = check.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let res = dot(mesh, &r, &r).sqrt() / bnorm;
        if res > 1e-8 {
            return Err(Error::NonConvergence { residual: res });
        }
    }
    Ok(StreamPotential {
        psi: Field { values: psi },
        top,
        bottom,
    })
}

/// Coefficients of the plankton equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanktonCoefficients {
    /// Consumption of plankton by fish.
    pub b: f64,
    pub mu: f64,
    pub boundary: PlanktonBoundary,
}

/// One step of `∂ₜP + v·∇P − μΔP = P(1 − P − bB)`.
///
/// Explicit upwind advection, semi-implicit reaction
/// `P(1 + dt)/(1 + dt(P + bB))`, implicit diffusion. With `bB < 1` and
/// `0 ≤ P ≤ 1 − bB` each stage maps the bound into itself when `B` is
/// frozen and uniform, or pointwise when there is no transport.
pub fn step_plankton(
    mesh: &Mesh,
    p: &Field,
    b: &Field,
    v: &VelocityField,
    coef: &PlanktonCoefficients,
    dt: f64,
) -> Result<Field> {
    check_cfl(mesh, v, dt)?;
    let n = mesh.len();
    let mut next = vec![0.0; n];
    for k in (0..n).filter(|&k| mesh.sea[k]) {
        let w = v.outward(mesh, k);
        let mut adv = 0.0;
        for (slot, nb) in mesh.neighbours(k).into_iter().enumerate() {
            if let Some(nb) = nb {
                if w[slot] < 0.0 {
                    adv += -w[slot] * (p.values[k] - p.values[nb]);
                }
            }
        }
        let pa = p.values[k] - dt / mesh.h * adv;
        next[k] = pa * (1.0 + dt) / (1.0 + dt * (pa + coef.b * b.values[k]).max(0.0));
    }
    let wall: Vec<f64> = match coef.boundary {
        PlanktonBoundary::Neumann => vec![0.0; n],
        PlanktonBoundary::Dirichlet => (0..n)
            .map(|k| {
                if mesh.sea[k] {
                    2.0 * mesh.neighbours(k).iter().filter(|nb| nb.is_none()).count() as f64
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let values = implicit_diffusion(mesh, &wall, coef.mu, dt, &next)?;
    Ok(Field { values })
}

/// Coefficients of the fish equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiomassCoefficients {
    /// Plankton-mediated growth factor.
    pub r: f64,
    pub kappa: f64,
    pub nu: f64,
}

/// Integrated terms of one biomass step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BiomassBudget {
    pub growth: f64,
    pub crowding: f64,
    pub catch: f64,
    /// Advected out through Γ₁ and Γ₂ (negative for net inflow).
    pub outflow: f64,
    /// `∫B_new − ∫B_old`.
    pub change: f64,
}

impl BiomassBudget {
    /// Change not explained by the reaction terms.
    pub fn residual(&self) -> f64 {
        self.change - (self.growth - self.crowding - self.catch - self.outflow)
    }

    pub fn accumulate(&mut self, other: &Self) {
        self.growth += other.growth;
        self.crowding += other.crowding;
        self.catch += other.catch;
        self.outflow += other.outflow;
        self.change += other.change;
    }
}

/// One step of `∂ₜB + ∇·(vB) − νΔB = B(rP − catch − κB)` with zero normal
/// gradient on the whole boundary.
///
/// Conservative upwind advection (flow through Γ₁ and Γ₂ carries the
/// boundary cell value, inflow brings the same value), then the semi-implicit reaction
/// `B' (1 + dt(κB + catch)) = B (1 + dt·rP)`, then implicit diffusion.
/// `catch` is the per-cell harvest rate. Every stage keeps `B ≥ 0`.
pub fn step_biomass(
    mesh: &Mesh,
    b: &Field,
    p: &Field,
    v: &VelocityField,
    catch: &Field,
    coef: &BiomassCoefficients,
    dt: f64,
) -> Result<(Field, BiomassBudget)> {
    check_cfl(mesh, v, dt)?;
    let n = mesh.len();
    let area = mesh.cell_area();
    let mut next = vec![0.0; n];
    let mut budget = BiomassBudget::default();
    for k in (0..n).filter(|&k| mesh.sea[k]) {
        let w = v.outward(mesh, k);
        let mut net_out = 0.0;
        for (slot, nb) in mesh.neighbours(k).into_iter().enumerate() {
            match nb {
                Some(nb) => {
                    net_out += w[slot]
                        * if w[slot] > 0.0 {
                            b.values[k]
                        } else {
                            b.values[nb]
                        }
                }
                None => {
                    net_out += w[slot] * b.values[k];
                    budget.outflow += dt * mesh.h * w[slot] * b.values[k];
                }
            }
        }
        let ba = b.values[k] - dt / mesh.h * net_out;
        let g = coef.r * p.values[k];
        let (gain, decay) = (g.max(0.0), (-g).max(0.0));
        let br = ba * (1.0 + dt * gain) / (1.0 + dt * (coef.kappa * ba + decay + catch.values[k]));
        next[k] = br;
        // br − ba = dt(gain·ba − decay·br − κ·ba·br − catch·br)
        budget.growth += area * dt * (gain * ba - decay * br);
        budget.crowding += area * dt * coef.kappa * ba * br;
        budget.catch += area * dt * catch.values[k] * br;
    }
    let values = implicit_diffusion(mesh, &vec![0.0; n], coef.nu, dt, &next)?;
    let out = Field { values };
    budget.change = out.integral(mesh) - b.integral(mesh);
    Ok((out, budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::mesh::MeshConfig;

    fn mesh() -> Mesh {
        Mesh::from_config(&MeshConfig::default()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_potential() {
        let m = mesh();
        let sp = solve_stream_potential(&m, |_| 0.0, |_| 0.0).unwrap();
        assert!(sp.psi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn potential_obeys_maximum_principle() {
        let m = mesh();
        let psi = solve_stream_potential(&m, |x| x - 6.0, |_| 0.0)
            .unwrap()
            .psi;
        assert!(psi.max_sea(&m) <= 1e-9);
        assert!(psi.min_sea(&m) >= -6.0 - 1e-9);
    }

    #[test]
    fn current_reverses_and_vanishes() {
        let m = mesh();
        let psi = solve_stream_potential(&m, |x| x - 6.0, |_| 0.0).unwrap();
        let v0 = current_velocity(&m, &psi, 0.0, 10.0, 2.0 * std::f64::consts::PI);
        let vh = current_velocity(&m, &psi, 0.5, 10.0, 2.0 * std::f64::consts::PI);
        let vq = current_velocity(&m, &psi, 0.25, 10.0, 2.0 * std::f64::consts::PI);
        assert!(v0.face_x.iter().zip(&vh.face_x).all(|(a, b)| a == &-b));
        assert!(v0.face_y.iter().zip(&vh.face_y).all(|(a, b)| a == &-b));
        assert!(vq.max_speed() < 1e-14 * v0.max_speed());
    }

    #[test]
    fn discrete_divergence_vanishes() {
        let m = mesh();
        let sp = solve_stream_potential(&m, |x| x - 6.0, |_| 0.0).unwrap();
        let v = sp.velocity(&m, 1.0);
        assert!(v.max_speed() > 0.1);
        let div = divergence(&m, &v);
        for j in 0..m.ny {
            for i in 0..m.nx {
                assert!(div.values[m.idx(i, j)].abs() <= 1e-6, "div at ({i},{j})");
            }
        }
    }
}
