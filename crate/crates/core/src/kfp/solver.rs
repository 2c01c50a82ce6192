use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::grid::{Grid2D, GridField};
use crate::sde::ModelParams;

/// Treatment of the truncation box boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Zero normal flux: mass is conserved exactly.
    #[default]
    NoFlux,
    /// Outgoing advective and diffusive flux leaves the box; nothing enters.
    Outflow,
}

/// Discretisation of the drift–diffusion flux across interior faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    /// Exponentially fitted (Scharfetter–Gummel) flux: upwind when drift
    /// dominates, centred when diffusion dominates.
    #[default]
    ExponentialFit,
    /// First-order upwind advection plus nodal diffusion.
    Upwind,
}

/// Spatial discretisation choices of the Kolmogorov solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct KfpScheme {
    pub boundary: Boundary,
    pub flux: FluxScheme,
}

const NONE: usize = usize::MAX;
const DIRS: usize = 4;

/// Keep every slice while the history stays below this many values,
/// otherwise checkpoint every ⌈√N⌉ steps.
const FULL_HISTORY_VALUES: usize = 4_000_000;

fn checkpoint_stride(steps: usize, len: usize) -> usize {
    if (steps + 1) * len <= FULL_HISTORY_VALUES {
        1
    } else {
        ((steps as f64).sqrt().ceil() as usize).max(1)
    }
}

fn is_checkpoint(step: usize, steps: usize, stride: usize) -> bool {
    step.is_multiple_of(stride) || step == steps
}

fn find_slice(checkpoints: &[(usize, Vec<f64>)], n: usize) -> Option<&[f64]> {
    checkpoints
        .binary_search_by_key(&n, |c| c.0)
        .ok()
        .map(|i| checkpoints[i].1.as_slice())
}

/// Probability density on a [`Grid2D`] over `[0, T]`.
///
/// Slices are kept at checkpoints (every step on small problems); mass,
/// boundary outflow and mean are recorded at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid2D,
    pub dt: f64,
    pub scheme: KfpScheme,
    pub steps: usize,
    pub stride: usize,
    /// `(n, ρ(t_n))`, sorted by `n`, always including `0` and `N`.
    pub checkpoints: Vec<(usize, Vec<f64>)>,
    pub mass: Vec<f64>,
    /// Mass that left through the boundary during `[0, t_n]`.
    pub outflow: Vec<f64>,
    pub mean: Vec<[f64; 2]>,
}

impl DensityField {
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// `ρ(t_n)` if step `n` was stored.
    pub fn slice(&self, n: usize) -> Option<&[f64]> {
        find_slice(&self.checkpoints, n)
    }

    pub fn initial(&self) -> &[f64] {
        &self.checkpoints[0].1
    }

    pub fn last(&self) -> &[f64] {
        &self.checkpoints.last().expect("final slice is stored").1
    }
}

/// Adjoint state ρ* over `[0, T]`, `ρ*(T) = 0`, stored at the same
/// checkpoints as the matching [`DensityField`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointField {
    pub grid: Grid2D,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub checkpoints: Vec<(usize, Vec<f64>)>,
}

impl AdjointField {
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn slice(&self, n: usize) -> Option<&[f64]> {
        find_slice(&self.checkpoints, n)
    }
}

/// Nearest-neighbour transition rates of the discrete Kolmogorov operator.
///
/// Direction order is `[−B1, +B1, −B2, +B2]`. `rate[k][d]` is the rate at
/// which mass moves from node `k` across face `d`, into the neighbour or,
/// for boundary faces under [`Boundary::Outflow`], out of the box.
pub(crate) struct Stencil {
    pub nb: Vec<[usize; DIRS]>,
    pub rate: Vec<[f64; DIRS]>,
    /// `∂rate/∂b` with `b` the drift at the face.
    pub rate_db: Vec<[f64; DIRS]>,
    /// Face coordinate `B_a`, so that `∂b/∂u_face = −B_a`.
    pub face_b: Vec<[f64; DIRS]>,
    pub out_total: Vec<f64>,
}

#[inline]
fn opposite(d: usize) -> usize {
    d ^ 1
}

fn check_problem(grid: &Grid2D, params: &ModelParams, u: &GridField) -> Result<()> {
    grid.validate()?;
    params.validate()?;
    check_dim(
        "species (the Kolmogorov solver is two-dimensional)",
        2,
        params.dim(),
    )?;
    check_dim("control components", 2, u.components())?;
    if u.grid != *grid {
        return Err(Error::InvalidArgument(
            "control field lives on a different grid".into(),
        ));
    }
    for v in &u.values {
        check_dim("control nodes", grid.len(), v.len())?;
    }
    Ok(())
}

/// `x / (eˣ − 1)` and its derivative.
fn bernoulli(x: f64) -> (f64, f64) {
    if x.abs() < 1e-6 {
        (1.0 - 0.5 * x + x * x / 12.0, -0.5 + x / 6.0)
    } else {
        let em = x.exp_m1();
        if !em.is_finite() {
            return (0.0, 0.0);
        }
        (x / em, (em - x * (em + 1.0)) / (em * em))
    }
}

/// Rate across a face for flux `aρ − Dρ'` with constant `a`, `D`, in the
/// direction `dir = ±1`, and its derivative in `a`.
fn fitted_rate(a: f64, diff: f64, h: f64, dir: f64) -> (f64, f64) {
    if diff <= 0.0 {
        let v = dir * a;
        return if v > 0.0 {
            (v / h, dir / h)
        } else {
            (0.0, 0.0)
        };
    }
    let x = -dir * a * h / diff;
    let (bx, dbx) = bernoulli(x);
    (diff / (h * h) * bx, -dir * dbx / h)
}

impl Stencil {
    pub fn new(grid: &Grid2D, params: &ModelParams, u: &GridField, scheme: KfpScheme) -> Self {
        let n = grid.n;
        let h = grid.h();
        let s2 = params.sigma * params.sigma;
        let len = grid.len();
        let mut nb = vec![[NONE; DIRS]; len];
        let mut rate = vec![[0.0; DIRS]; len];
        let mut rate_db = vec![[0.0; DIRS]; len];
        let mut face_b = vec![[0.0; DIRS]; len];
        let mut out_total = vec![0.0; len];
        for j in 0..n {
            for i in 0..n {
                let k = grid.idx(i, j);
                let node = grid.node(k);
                for d in 0..DIRS {
                    let axis = d / 2;
                    let dir = if d % 2 == 1 { 1.0 } else { -1.0 };
                    let (ii, jj) = (i as isize, j as isize);
                    let (ni, nj) = match d {
                        0 => (ii - 1, jj),
                        1 => (ii + 1, jj),
                        2 => (ii, jj - 1),
                        _ => (ii, jj + 1),
                    };
                    let inside = ni >= 0 && nj >= 0 && (ni as usize) < n && (nj as usize) < n;
                    let other = if inside {
                        grid.idx(ni as usize, nj as usize)
                    } else {
                        NONE
                    };
                    let mut bf = node;
                    bf[axis] += dir * 0.5 * h;
                    let u_face = if inside {
                        0.5 * (u.values[axis][k] + u.values[axis][other])
                    } else {
                        u.values[axis][k]
                    };
                    let growth = params.r[axis]
                        - params.kappa[axis][0] * bf[0]
                        - params.kappa[axis][1] * bf[1]
                        - u_face;
                    let drift = growth * bf[axis];
                    let node_diff = 0.5 * s2 * node[axis] * node[axis] / (h * h);
                    let (r, dr) = if inside && scheme.flux == FluxScheme::ExponentialFit {
                        // flux bρ − ∂(Dρ) = (b − D′)ρ − Dρ′ with D = ½σ²B², frozen at the face
                        let diff = 0.5 * s2 * bf[axis] * bf[axis];
                        fitted_rate(drift - s2 * bf[axis], diff, h, dir)
                    } else {
                        let outward = dir * drift;
                        if outward > 0.0 {
                            (outward / h + node_diff, dir / h)
                        } else {
                            (node_diff, 0.0)
                        }
                    };
                    face_b[k][d] = bf[axis];
                    nb[k][d] = other;
                    if inside || scheme.boundary == Boundary::Outflow {
                        rate[k][d] = r;
                        rate_db[k][d] = dr;
                        out_total[k] += r;
                    }
                }
            }
        }
        Self {
            nb,
            rate,
            rate_db,
            face_b,
            out_total,
        }
    }

    pub fn max_out(&self) -> f64 {
        self.out_total.iter().copied().fold(0.0, f64::max)
    }

    /// `ρ ← Aρ`; returns the mass that left through the boundary (per unit cell area).
    pub fn forward(&self, rho: &[f64], dt: f64, out: &mut [f64]) -> f64 {
        out.par_iter_mut()
            .enumerate()
            .with_min_len(512)
            .for_each(|(k, o)| {
                let mut v = rho[k] * (1.0 - dt * self.out_total[k]);
                for d in 0..DIRS {
                    let m = self.nb[k][d];
                    if m != NONE {
                        v += dt * self.rate[m][opposite(d)] * rho[m];
                    }
                }
                *o = v;
            });
        let mut lost = 0.0;
        for (k, row) in self.nb.iter().enumerate() {
            for d in 0..DIRS {
                if row[d] == NONE {
                    lost += dt * self.rate[k][d] * rho[k];
                }
            }
        }
        lost
    }

    /// `λ ← Aᵀλ + src`.
    pub fn adjoint(&self, lam: &[f64], dt: f64, src: &[f64], out: &mut [f64]) {
        out.par_iter_mut()
            .enumerate()
            .with_min_len(512)
            .for_each(|(k, o)| {
                let mut v = lam[k] * (1.0 - dt * self.out_total[k]);
                for d in 0..DIRS {
                    let m = self.nb[k][d];
                    if m != NONE {
                        v += dt * self.rate[k][d] * lam[m];
                    }
                }
                *o = v + src[k];
            });
    }
}

/// Discrete `∂u_i/∂B_axis` at node `k` as `(weight, node)` pairs: centred
/// in the interior, one-sided on the edges.
fn derivative_stencil(grid: &Grid2D, k: usize, axis: usize) -> [(f64, usize); 2] {
    let n = grid.n;
    let h = grid.h();
    let (i, j) = (k % n, k / n);
    let pos = if axis == 0 { i } else { j };
    let at = |p: usize| {
        if axis == 0 {
            grid.idx(p, j)
        } else {
            grid.idx(i, p)
        }
    };
    if pos == 0 {
        [(-1.0 / h, at(0)), (1.0 / h, at(1))]
    } else if pos == n - 1 {
        [(-1.0 / h, at(n - 2)), (1.0 / h, at(n - 1))]
    } else {
        [(-0.5 / h, at(pos - 1)), (0.5 / h, at(pos + 1))]
    }
}

/// Running cost `w|B − B^d|² − α·u + Σ_i β_i Σ_j (σ B_j ∂_j u_i)²` at every node.
pub fn running_cost(grid: &Grid2D, params: &ModelParams, u: &GridField) -> Vec<f64> {
    let s2 = params.sigma * params.sigma;
    (0..grid.len())
        .map(|k| {
            let b = grid.node(k);
            let mut c = 0.0;
            for i in 0..2 {
                c += params.tracking_weight * (b[i] - params.b_desired[i]).powi(2);
                c -= params.alpha[i] * u.values[i][k];
                if params.beta[i] != 0.0 {
                    for (axis, bj) in b.iter().enumerate() {
                        let g: f64 = derivative_stencil(grid, k, axis)
                            .iter()
                            .map(|(w, m)| w * u.values[i][*m])
                            .sum();
                        c += params.beta[i] * s2 * bj * bj * g * g;
                    }
                }
            }
            c
        })
        .collect()
}

/// Gaussian of mean `b0` and standard deviation `sigma_init` per axis,
/// sampled at the nodes, truncated to the box and scaled to unit mass.
/// A zero deviation gives unit mass on the nearest node.
pub fn initial_density(grid: &Grid2D, b0: &[f64], sigma_init: f64) -> Result<Vec<f64>> {
    grid.validate()?;
    check_dim("initial biomass", 2, b0.len())?;
    if !(sigma_init >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma_init must be non-negative, got {sigma_init}"
        )));
    }
    if b0.iter().any(|&x| x < grid.lo || x > grid.hi) {
        return Err(Error::InvalidArgument(format!(
            "initial biomass {b0:?} lies outside the box [{}, {}]",
            grid.lo, grid.hi
        )));
    }
    let area = grid.cell_area();
    let mut rho = vec![0.0; grid.len()];
    if sigma_init == 0.0 {
        let near =
            |x: f64| (((x - grid.lo) / grid.h() - 0.5).round().max(0.0) as usize).min(grid.n - 1);
        rho[grid.idx(near(b0[0]), near(b0[1]))] = 1.0 / area;
        return Ok(rho);
    }
    if b0
        .iter()
        .any(|&x| x - 3.0 * sigma_init < grid.lo || x + 3.0 * sigma_init > grid.hi)
    {
        log::warn!(
            "initial density centred at {b0:?} is truncated by the box: margin below 3 sigma"
        );
    }
    for (k, p) in rho.iter_mut().enumerate() {
        let x = grid.node(k);
        let r2 = (x[0] - b0[0]).powi(2) + (x[1] - b0[1]).powi(2);
        *p = (-0.5 * r2 / (sigma_init * sigma_init)).exp();
    }
    let mass: f64 = area * rho.iter().sum::<f64>();
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument(
            "initial density has no mass on the grid".into(),
        ));
    }
    rho.iter_mut().for_each(|p| *p /= mass);
    Ok(rho)
}

/// Largest time step that keeps the explicit scheme monotone, with a 10% margin.
pub fn stable_dt(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    scheme: KfpScheme,
) -> Result<f64> {
    check_problem(grid, params, u)?;
    let m = Stencil::new(grid, params, u, scheme).max_out();
    Ok(if m > 0.0 { 0.9 / m } else { params.horizon })
}

fn prepare(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    dt: f64,
    scheme: KfpScheme,
) -> Result<(Stencil, usize, f64)> {
    check_problem(grid, params, u)?;
    let (n, dt) = params.time_grid(dt)?;
    let st = Stencil::new(grid, params, u, scheme);
    let cfl = dt * st.max_out();
    if cfl > 1.0 {
        return Err(Error::Stability {
            cfl,
            suggested_dt: 0.9 / st.max_out(),
        });
    }
    Ok((st, n, dt))
}

fn density_moments(grid: &Grid2D, rho: &[f64]) -> (f64, [f64; 2]) {
    let mut acc = [0.0; 2];
    let mut m = 0.0;
    for (k, &p) in rho.iter().enumerate() {
        let x = grid.node(k);
        acc[0] += p * x[0];
        acc[1] += p * x[1];
        m += p;
    }
    let mean = if m > 0.0 {
        [acc[0] / m, acc[1] / m]
    } else {
        [f64::NAN; 2]
    };
    (m * grid.cell_area(), mean)
}

/// Forward Kolmogorov solve under the time-independent quota `u`,
/// returning the density and the objective `J = Σ_n dt ∫ c ρⁿ dB`
/// (left-point rule in time).
pub fn solve_forward(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    dt: f64,
) -> Result<(DensityField, f64)> {
    solve_forward_with(grid, params, u, dt, KfpScheme::default())
}

pub fn solve_forward_with(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    dt: f64,
    scheme: KfpScheme,
) -> Result<(DensityField, f64)> {
    let (st, n, dt) = prepare(grid, params, u, dt, scheme)?;
    let area = grid.cell_area();
    let cost = running_cost(grid, params, u);
    let stride = checkpoint_stride(n, grid.len());
    let mut cur = initial_density(grid, &params.b0, params.sigma_init)?;
    let mut next = vec![0.0; grid.len()];
    let (m0, mean0) = density_moments(grid, &cur);
    let mut mass = vec![m0];
    let mut mean = vec![mean0];
    let mut outflow = vec![0.0];
    let mut checkpoints = vec![(0, cur.clone())];
    let mut j = 0.0;
    let mut lost = 0.0;
    for step in 0..n {
        j += dt * area * cur.iter().zip(&cost).map(|(p, c)| p * c).sum::<f64>();
        lost += area * st.forward(&cur, dt, &mut next);
        if next.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::SchemeFault(format!(
                "density lost positivity or finiteness at t = {}",
                (step + 1) as f64 * dt
            )));
        }
        std::mem::swap(&mut cur, &mut next);
        let (m, mu) = density_moments(grid, &cur);
        mass.push(m);
        mean.push(mu);
        outflow.push(lost);
        if is_checkpoint(step + 1, n, stride) {
            checkpoints.push((step + 1, cur.clone()));
        }
    }
    Ok((
        DensityField {
            grid: *grid,
            dt,
            scheme,
            steps: n,
            stride,
            checkpoints,
            mass,
            outflow,
            mean,
        },
        j,
    ))
}

/// Backward solve of the exact discrete adjoint of [`solve_forward`]:
/// `J = ∫ ρ*(0) ρ⁰ dB` for every initial density.
pub fn solve_adjoint(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    dt: f64,
) -> Result<AdjointField> {
    solve_adjoint_with(grid, params, u, dt, KfpScheme::default())
}

fn adjoint_source(grid: &Grid2D, params: &ModelParams, u: &GridField, dt: f64) -> Vec<f64> {
    // ρ* = λ/h² with λ the multiplier of the nodal values, whose source is dt·h²·c
    running_cost(grid, params, u)
        .iter()
        .map(|c| dt * c)
        .collect()
}

pub fn solve_adjoint_with(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    dt: f64,
    scheme: KfpScheme,
) -> Result<AdjointField> {
    let (st, n, dt) = prepare(grid, params, u, dt, scheme)?;
    let src = adjoint_source(grid, params, u, dt);
    let stride = checkpoint_stride(n, grid.len());
    let mut cur = vec![0.0; grid.len()];
    let mut prev = vec![0.0; grid.len()];
    let mut checkpoints = vec![(n, cur.clone())];
    for step in (0..n).rev() {
        st.adjoint(&cur, dt, &src, &mut prev);
        if prev.iter().any(|p| !p.is_finite()) {
            return Err(Error::SchemeFault(format!(
                "adjoint lost finiteness at t = {}",
                step as f64 * dt
            )));
        }
        std::mem::swap(&mut cur, &mut prev);
        if is_checkpoint(step, n, stride) {
            checkpoints.push((step, cur.clone()));
        }
    }
    checkpoints.reverse();
    Ok(AdjointField {
        grid: *grid,
        dt,
        steps: n,
        stride,
        checkpoints,
    })
}

/// Exact derivative of the discrete objective with respect to every nodal
/// control value: `dJ·δu = Σ_{i,k} g_i[k] δu_i[k]`.
///
/// Time levels between checkpoints are recomputed segment by segment.
pub fn objective_gradient(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    rho: &DensityField,
    adjoint: &AdjointField,
) -> Result<GridField> {
    check_problem(grid, params, u)?;
    if rho.grid != *grid || adjoint.grid != *grid {
        return Err(Error::InvalidArgument(
            "density, adjoint and control must share the grid".into(),
        ));
    }
    check_dim("adjoint time steps", rho.steps, adjoint.steps)?;
    if rho.stride != adjoint.stride || (rho.dt - adjoint.dt).abs() > 1e-15 * rho.dt.max(1.0) {
        return Err(Error::InvalidArgument(
            "density and adjoint use different time grids".into(),
        ));
    }
    let dt = rho.dt;
    let area = grid.cell_area();
    let n_steps = rho.steps;
    let st = Stencil::new(grid, params, u, rho.scheme);
    let src = adjoint_source(grid, params, u, dt);
    let len = grid.len();

    // time-integrated density Σ_n ρⁿ_k and Σ_n (λⁿ⁺¹_dest − λⁿ⁺¹_k) ρⁿ_k per face
    let mut occupation = vec![0.0; len];
    let mut face_sum = vec![[0.0; DIRS]; len];
    let mut start = 0;
    while start < n_steps {
        let end = (start + rho.stride).min(n_steps);
        let mut rhos = Vec::with_capacity(end - start);
        let first = rho
            .slice(start)
            .ok_or_else(|| Error::InvalidArgument(format!("density checkpoint {start} missing")))?;
        rhos.push(first.to_vec());
        for _ in start + 1..end {
            let mut next = vec![0.0; len];
            st.forward(rhos.last().expect("non-empty"), dt, &mut next);
            rhos.push(next);
        }
        // λ at levels end, end−1, …, start+1
        let mut lams = Vec::with_capacity(end - start);
        let last = adjoint
            .slice(end)
            .ok_or_else(|| Error::InvalidArgument(format!("adjoint checkpoint {end} missing")))?;
        lams.push(last.to_vec());
        for _ in start + 1..end {
            let mut prev = vec![0.0; len];
            st.adjoint(lams.last().expect("non-empty"), dt, &src, &mut prev);
            lams.push(prev);
        }
        lams.reverse();
        occupation
            .par_iter_mut()
            .zip(face_sum.par_iter_mut())
            .enumerate()
            .with_min_len(256)
            .for_each(|(k, (occ, fs))| {
                for (r, lam) in rhos.iter().zip(&lams) {
                    let p = r[k];
                    *occ += p;
                    if p == 0.0 {
                        continue;
                    }
                    for d in 0..DIRS {
                        if st.rate_db[k][d] != 0.0 {
                            let m = st.nb[k][d];
                            let dest = if m == NONE { 0.0 } else { lam[m] };
                            fs[d] += (dest - lam[k]) * p;
                        }
                    }
                }
            });
        start = end;
    }

    let mut grad = vec![vec![0.0; len]; 2];
    let s2 = params.sigma * params.sigma;
    for k in 0..len {
        let b = grid.node(k);
        let occ = dt * area * occupation[k];
        for i in 0..2 {
            grad[i][k] -= params.alpha[i] * occ;
            if params.beta[i] != 0.0 {
                for (axis, bj) in b.iter().enumerate() {
                    let stencil = derivative_stencil(grid, k, axis);
                    let g: f64 = stencil.iter().map(|(w, m)| w * u.values[i][*m]).sum();
                    let coef = 2.0 * params.beta[i] * s2 * bj * bj * g * occ;
                    for (w, m) in stencil {
                        grad[i][m] += coef * w;
                    }
                }
            }
        }
    }
    for k in 0..len {
        for d in 0..DIRS {
            let sens = dt * area * face_sum[k][d] * st.rate_db[k][d];
            if sens == 0.0 {
                continue;
            }
            let axis = d / 2;
            // ∂b/∂u_face = −B_axis, the face value being the mean of its two nodes
            let db = -st.face_b[k][d];
            let m = st.nb[k][d];
            if m != NONE {
                grad[axis][k] += 0.5 * sens * db;
                grad[axis][m] += 0.5 * sens * db;
            } else {
                grad[axis][k] += sens * db;
            }
        }
    }
    Ok(GridField {
        grid: *grid,
        values: grad,
    })
}

/// Componentwise clamp of the control onto `[u_min, u_max]`.
pub fn project_box(u: &GridField, u_min: f64, u_max: f64) -> GridField {
    u.project(u_min, u_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(0.0, 3.0, n).unwrap()
    }

    /// Quota `u = r − κB` cancels the drift everywhere.
    fn driftless(g: Grid2D) -> (ModelParams, GridField) {
        let mut p = ModelParams::two_species().with_noise(0.0);
        p.sigma_init = 0.2;
        (p.u_min, p.u_max) = (-10.0, 10.0);
        let u = GridField::from_fn(g, 2, |b| {
            (0..2)
                .map(|i| p.r[i] - p.kappa[i][0] * b[0] - p.kappa[i][1] * b[1])
                .collect()
        });
        (p, u)
    }

    /// Near-zero capacity and `u = r`: no drift, constant running cost `−α·u`.
    fn constant_source(g: Grid2D) -> (ModelParams, GridField) {
        let mut p = ModelParams::two_species().with_noise(0.0);
        p.r = vec![0.9, 0.9];
        p.kappa = vec![vec![1e-300, 0.0], vec![0.0, 1e-300]];
        p.tracking_weight = 0.0;
        p.beta = vec![0.0, 0.0];
        (p, GridField::constant(g, &[0.9, 0.9]))
    }

    #[test]
    fn initial_density_moments() {
        let g = grid(120);
        let rho = initial_density(&g, &[1.2, 0.8], 0.1).unwrap();
        let (mass, mean) = density_moments(&g, &rho);
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((mean[0] - 1.2).abs() < g.h() && (mean[1] - 0.8).abs() < g.h());
        let var: f64 = rho
            .iter()
            .enumerate()
            .map(|(k, p)| p * (g.node(k)[0] - mean[0]).powi(2))
            .sum::<f64>()
            * g.cell_area();
        assert!((var.sqrt() - 0.1).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn zero_spread_is_a_single_node() {
        let g = grid(30);
        let rho = initial_density(&g, &[1.2, 0.8], 0.0).unwrap();
        assert_eq!(rho.iter().filter(|&&p| p > 0.0).count(), 1);
        assert!((density_moments(&g, &rho).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn driftless_density_is_stationary() {
        let g = grid(40);
        let (p, u) = driftless(g);
        let (rho, _) = solve_forward(&g, &p, &u, 0.01).unwrap();
        let diff = rho
            .last()
            .iter()
            .zip(rho.initial())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn homogeneous_adjoint_vanishes() {
        let g = grid(24);
        let mut p = ModelParams::two_species();
        p.tracking_weight = 0.0;
        p.alpha = vec![0.0, 0.0];
        p.beta = vec![0.0, 0.0];
        let u = GridField::constant(g, &[0.9, 0.9]);
        let adj = solve_adjoint(&g, &p, &u, 0.005).unwrap();
        assert!(adj
            .checkpoints
            .iter()
            .all(|(_, v)| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn constant_source_integrates_backwards_in_time() {
        let g = grid(24);
        let (p, u) = constant_source(g);
        let adj = solve_adjoint(&g, &p, &u, 0.01).unwrap();
        assert!(adj.slice(adj.steps).unwrap().iter().all(|&x| x == 0.0));
        let c = -(0.1 * 0.9 + 0.1 * 0.9);
        for (n, v) in &adj.checkpoints {
            let expected = c * (p.horizon - adj.time(*n));
            let worst = v.iter().map(|x| (x - expected).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-12, "n = {n}: {} vs {expected}", v[0]);
        }
    }

    #[test]
    fn zero_density_gives_zero_gradient() {
        let g = grid(24);
        let p = ModelParams::two_species();
        let u = GridField::constant(g, &[0.9, 0.9]);
        let (mut rho, _) = solve_forward(&g, &p, &u, 0.005).unwrap();
        let adj = solve_adjoint(&g, &p, &u, 0.005).unwrap();
        rho.checkpoints
            .iter_mut()
            .for_each(|(_, v)| v.iter_mut().for_each(|x| *x = 0.0));
        let grad = objective_gradient(&g, &p, &u, &rho, &adj).unwrap();
        assert!(grad.values.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn too_large_step_is_rejected_with_a_suggestion() {
        let g = grid(60);
        let p = ModelParams::two_species();
        let u = GridField::constant(g, &[0.9, 0.9]);
        match solve_forward(&g, &p, &u, 0.5) {
            Err(Error::Stability { cfl, suggested_dt }) => {
                assert!(cfl > 1.0);
                assert!(solve_forward(&g, &p, &u, suggested_dt).is_ok());
            }
            other => panic!("expected a stability error, got {other:?}"),
        }
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let g = grid(8);
        let u = GridField::from_fn(g, 2, |b| vec![b[0], 0.9]);
        let once = project_box(&u, 0.4, 1.4);
        assert!(once.values[0].iter().all(|v| (0.4..=1.4).contains(v)));
        assert_eq!(once.values[1], u.values[1]);
        assert_eq!(project_box(&once, 0.4, 1.4), once);
        let mut high = GridField::constant(g, &[0.9, 0.9]);
        high.values[0][3] = 2.0;
        assert_eq!(project_box(&high, 0.4, 1.4).values[0][3], 1.4);
    }
}
