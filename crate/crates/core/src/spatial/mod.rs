//! Open-sea model: plankton and fish reaction–advection–diffusion on a
//! coastal box, a potential-flow current, boats that chase the biomass
//! gradient, and a global quota adjusted to the biomass trend.
//!
//! Each step advances plankton and fish (sub-cycled when the explicit
//! transport would exceed its stability bound), then the fleet, then the
//! quota. Boats harvest through a normalised hat kernel centred on their
//! position at rate `Q` each.

mod fleet;
mod mesh;
mod transport;

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use fleet::{biomass_gradient, catch_field, step_fleet, Boat, BoatMode, Fleet, FleetConfig};
pub use mesh::{Field, LandRect, Mesh, MeshConfig};
pub use transport::{
    current_velocity, divergence, potential_velocity, solve_stream_potential, step_biomass,
    step_plankton, transport_cfl, BiomassBudget, BiomassCoefficients, PlanktonBoundary,
    PlanktonCoefficients, StreamPotential, VelocityField,
};

use crate::error::{Error, Result};

/// How fish are transported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FishDrift {
    /// Fish drift with the sea current.
    #[default]
    Current,
    /// Fish climb the plankton gradient: flux `B∇P`.
    Plankton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaMode {
    /// Quota frozen at its initial value.
    #[default]
    NoQuota,
    /// `Q ← max(0, Q + gain·dt·(∫Bₙ₊₁ − ∫Bₙ))` after every step.
    WithQuota,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialParams {
    /// Plankton-mediated growth factor of fish.
    pub r: f64,
    pub kappa: f64,
    /// Plankton consumption by fish.
    pub b: f64,
    /// Plankton diffusivity.
    pub mu: f64,
    /// Fish diffusivity.
    pub nu: f64,
    pub current_amplitude: f64,
    pub current_frequency: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Initial quota per boat.
    pub q0: f64,
    pub quota_gain: f64,
    /// Effort coefficients of the single-site model. Parsed and stored;
    /// the spatial model has no effort equation.
    pub c: f64,
    pub a: f64,
    pub drift: FishDrift,
    pub plankton_boundary: PlanktonBoundary,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self {
            r: 1.0,
            kappa: 1.0,
            b: 1.0,
            mu: 0.1,
            nu: 0.1,
            current_amplitude: 10.0,
            current_frequency: 2.0 * PI,
            dt: 0.02,
            horizon: 2.0,
            q0: 0.05,
            quota_gain: 1.0,
            c: 0.7,
            a: 0.2,
            drift: FishDrift::Current,
            plankton_boundary: PlanktonBoundary::Neumann,
        }
    }
}

impl SpatialParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.r,
            self.kappa,
            self.b,
            self.mu,
            self.nu,
            self.current_amplitude,
            self.current_frequency,
            self.dt,
            self.horizon,
            self.q0,
            self.quota_gain,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "spatial parameters must be finite".into(),
            ));
        }
        if self.mu < 0.0 || self.nu < 0.0 {
            return Err(Error::InvalidArgument(
                "diffusivities must be non-negative".into(),
            ));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(
                "dt and horizon must be positive".into(),
            ));
        }
        if self.kappa < 0.0 || self.b < 0.0 || self.q0 < 0.0 {
            return Err(Error::InvalidArgument(
                "kappa, b and q0 must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn plankton(&self) -> PlanktonCoefficients {
        PlanktonCoefficients {
            b: self.b,
            mu: self.mu,
            boundary: self.plankton_boundary,
        }
    }

    pub fn biomass(&self) -> BiomassCoefficients {
        BiomassCoefficients {
            r: self.r,
            kappa: self.kappa,
            nu: self.nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub params: SpatialParams,
    pub mesh: MeshConfig,
    pub fleet: FleetConfig,
    pub mode: QuotaMode,
    pub seed: u64,
    /// Times at which B and P are stored (rounded to the nearest step).
    pub snapshot_times: Vec<f64>,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            params: SpatialParams::default(),
            mesh: MeshConfig::default(),
            fleet: FleetConfig::default(),
            mode: QuotaMode::NoQuota,
            seed: 0,
            snapshot_times: vec![0.0, 0.4, 0.8, 1.2, 1.6, 2.0],
        }
    }
}

/// `[1 − ((x − 4)² + (y − 6)²)/40]⁺`, the initial plankton and fish bump.
pub fn initial_bump(p: [f64; 2]) -> f64 {
    (1.0 - ((p[0] - 4.0).powi(2) + (p[1] - 6.0).powi(2)) / 40.0).max(0.0)
}

/// `max(0, Q + dt·(∫B_now − ∫B_prev))`.
pub fn update_quota(q: f64, mesh: &Mesh, b_now: &Field, b_prev: &Field, dt: f64) -> f64 {
    quota_from_totals(q, b_now.integral(mesh), b_prev.integral(mesh), dt)
}

pub fn quota_from_totals(q: f64, total_now: f64, total_prev: f64, dt: f64) -> f64 {
    (q + dt * (total_now - total_prev)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalsRecord {
    pub step: usize,
    pub t: f64,
    pub int_b: f64,
    pub int_p: f64,
    pub q: f64,
    pub n_fishing: usize,
    pub n_docked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub b: Field,
    pub p: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialRun {
    pub mesh: Mesh,
    pub psi: Field,
    /// PDE sub-steps per fleet step.
    pub substeps: usize,
    pub totals: Vec<TotalsRecord>,
    /// Fleet state after each step, starting with the initial fleet.
    pub fleet_log: Vec<Fleet>,
    /// Biomass budget of each step.
    pub budgets: Vec<BiomassBudget>,
    pub snapshots: Vec<Snapshot>,
    pub b: Field,
    pub p: Field,
}

impl SpatialRun {
    /// CSV `step,t,int_B,int_P,Q,n_fishing,n_docked`.
    pub fn totals_csv(&self) -> String {
        let mut s = String::from("step,t,int_B,int_P,Q,n_fishing,n_docked\n");
        for r in &self.totals {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.step, r.t, r.int_b, r.int_p, r.q, r.n_fishing, r.n_docked
            )
            .expect("infallible");
        }
        s
    }

    /// CSV `step,boat_id,x,y,mode`.
    pub fn fleet_csv(&self) -> String {
        let mut s = String::from("step,boat_id,x,y,mode\n");
        for (step, fleet) in self.fleet_log.iter().enumerate() {
            for (i, b) in fleet.boats.iter().enumerate() {
                writeln!(
                    s,
                    "{step},{i},{},{},{}",
                    b.pos[0],
                    b.pos[1],
                    b.mode.as_str()
                )
                .expect("infallible");
            }
        }
        s
    }

    /// Largest per-step budget residual relative to `∫B` before the step.
    pub fn max_budget_residual(&self) -> f64 {
        self.budgets
            .iter()
            .zip(&self.totals)
            .map(|(bud, rec)| bud.residual().abs() / rec.int_b.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Full simulation from the bump initial data.
pub fn run_spatial(cfg: &SpatialConfig) -> Result<SpatialRun> {
    let mesh = Mesh::from_config(&cfg.mesh)?;
    let b0 = Field::from_fn(&mesh, initial_bump);
    run_spatial_from(cfg, &mesh, b0.clone(), b0)
}

/// Full simulation from given plankton and fish fields.
pub fn run_spatial_from(
    cfg: &SpatialConfig,
    mesh: &Mesh,
    p0: Field,
    b0: Field,
) -> Result<SpatialRun> {
    let prm = &cfg.params;
    prm.validate()?;
    let steps = (prm.horizon / prm.dt).round() as usize;
    if steps == 0 || ((steps as f64 * prm.dt) - prm.horizon).abs() > 1e-9 * prm.horizon {
        return Err(Error::InvalidArgument(format!(
            "horizon {} is not a multiple of dt {}",
            prm.horizon, prm.dt
        )));
    }
    if !(p0.is_finite(mesh) && b0.is_finite(mesh)) || b0.min_sea(mesh) < 0.0 {
        return Err(Error::InvalidArgument(
            "initial fields must be finite and B non-negative".into(),
        ));
    }
    let stream = solve_stream_potential(mesh, |x| x - 6.0, |_| 0.0)?;
    let peak = stream.velocity(mesh, prm.current_amplitude.abs());
    let mut fleet = Fleet::new(mesh, &cfg.fleet)?;
    let radius = cfg.fleet.kernel_cells * mesh.h;

    let snap_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|t| (t / prm.dt).round() as usize)
        .collect();
    let (mut p, mut b) = (p0, b0);
    let mut q = prm.q0;
    let record = |step: usize, b: &Field, p: &Field, q: f64, fleet: &Fleet| TotalsRecord {
        step,
        t: step as f64 * prm.dt,
        int_b: b.integral(mesh),
        int_p: p.integral(mesh),
        q,
        n_fishing: fleet.count(BoatMode::Fishing),
        n_docked: fleet.count(BoatMode::Docked),
    };
    let mut totals = vec![record(0, &b, &p, q, &fleet)];
    let mut fleet_log = vec![fleet.clone()];
    let mut budgets = Vec::with_capacity(steps);
    let mut snapshots = vec![];
    if snap_steps.contains(&0) {
        snapshots.push(Snapshot {
            step: 0,
            t: 0.0,
            b: b.clone(),
            p: p.clone(),
        });
    }
    let mut max_sub = 1;

    for n in 0..steps {
        let t = n as f64 * prm.dt;
        let mut cfl = transport_cfl(mesh, &peak, prm.dt);
        if prm.drift == FishDrift::Plankton {
            cfl = cfl.max(transport_cfl(
                mesh,
                &potential_velocity(mesh, &p, 1.0),
                prm.dt,
            ));
        }
        let sub = ((cfl / 0.9).ceil() as usize).max(1);
        max_sub = max_sub.max(sub);
        let h = prm.dt / sub as f64;
        let catch = catch_field(mesh, &fleet, q, radius);
        let total_prev = totals.last().expect("initial record").int_b;
        let mut budget = BiomassBudget::default();
        for s in 0..sub {
            let ts = t + s as f64 * h;
            let v = current_velocity(
                mesh,
                &stream,
                ts,
                prm.current_amplitude,
                prm.current_frequency,
            );
            let p_next = step_plankton(mesh, &p, &b, &v, &prm.plankton(), h)?;
            let vb = match prm.drift {
                FishDrift::Current => v,
                FishDrift::Plankton => potential_velocity(mesh, &p, 1.0),
            };
            let (b_next, bud) = step_biomass(mesh, &b, &p, &vb, &catch, &prm.biomass(), h)?;
            budget.accumulate(&bud);
            p = p_next;
            b = b_next;
        }
        if !(p.is_finite(mesh) && b.is_finite(mesh)) {
            return Err(Error::IntegrationFailure { time: t + prm.dt });
        }
        fleet = step_fleet(&fleet, mesh, &b, prm.dt, cfg.seed, n as u64);
        let rec = record(n + 1, &b, &p, q, &fleet);
        if cfg.mode == QuotaMode::WithQuota {
            q = quota_from_totals(q, rec.int_b, total_prev, prm.quota_gain * prm.dt);
        }
        totals.push(TotalsRecord { q, ..rec });
        budgets.push(budget);
        fleet_log.push(fleet.clone());
        if snap_steps.contains(&(n + 1)) {
            snapshots.push(Snapshot {
                step: n + 1,
                t: rec.t,
                b: b.clone(),
                p: p.clone(),
            });
        }
    }
    Ok(SpatialRun {
        mesh: mesh.clone(),
        psi: stream.psi,
        substeps: max_sub,
        totals,
        fleet_log,
        budgets,
        snapshots,
        b,
        p,
    })
}
