use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{EffortMode, ModelParams, PolicyKind, QuotaPolicy, Scheme};
use crate::error::{check_dim, Error, Result};
use crate::feedback::FeedbackState;
use crate::rng;

/// Biomass vector, effort and time of one simulated state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct State {
    pub b: Vec<f64>,
    pub e: f64,
    pub t: f64,
}

/// One simulated path on the uniform grid `t_k = k·T/N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Control applied from each time onwards (policy output, clamped).
    pub controls: Vec<Vec<f64>>,
    /// Seed of the path's random stream; `None` for noise-free runs.
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// Biomass of species `i` along the path.
    pub fn biomass(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.b[i]).collect()
    }
}

/// Drift of the biomass and effort equations for harvest rate `u`:
/// `B⋆(r − κB − u)` and `a − B·u − cE`.
pub fn drift_eval(params: &ModelParams, b: &[f64], e: f64, u: &[f64]) -> Result<(Vec<f64>, f64)> {
    let d = params.dim();
    check_dim("biomass", d, b.len())?;
    check_dim("control", d, u.len())?;
    let db = (0..d)
        .map(|i| b[i] * growth_rate(params, b, i, u[i]))
        .collect();
    let bu: f64 = b.iter().zip(u).map(|(x, y)| x * y).sum();
    Ok((db, params.a - bu - params.c * e))
}

#[inline]
fn growth_rate(params: &ModelParams, b: &[f64], i: usize, harvest: f64) -> f64 {
    let kb: f64 = params.kappa[i].iter().zip(b).map(|(k, x)| k * x).sum();
    params.r[i] - kb - harvest
}

/// Advance `(b, e)` by one step of length `dt` with Brownian increments
/// `dw` (biomass, one per species) and `dw_e` (effort).
///
/// `control` is the policy output: the harvest rate in
/// [`EffortMode::Reduced`], the per-effort quota in [`EffortMode::Full`].
pub fn step(
    params: &ModelParams,
    b: &mut [f64],
    e: &mut f64,
    control: &[f64],
    dt: f64,
    dw: &[f64],
    dw_e: f64,
) {
    let d = b.len();
    let (sigma, sigma_e) = (params.sigma, params.sigma_prime);
    let effort = *e;
    let harvest = |i: usize| match params.effort {
        EffortMode::Reduced => control[i],
        EffortMode::Full => control[i] * effort,
    };
    let rates: Vec<f64> = (0..d)
        .map(|i| growth_rate(params, b, i, harvest(i)))
        .collect();
    let bq: f64 = b.iter().zip(control).map(|(x, q)| x * q).sum();
    match params.scheme {
        Scheme::LogEuler => {
            for i in 0..d {
                b[i] *= ((rates[i] - 0.5 * sigma * sigma) * dt + sigma * dw[i]).exp();
            }
            if params.effort == EffortMode::Full {
                let carried = effort * ((-0.5 * sigma_e * sigma_e) * dt + sigma_e * dw_e).exp();
                *e = (carried + params.a * dt) / (1.0 + (bq + params.c) * dt);
            }
        }
        Scheme::ClampedEuler => {
            for i in 0..d {
                b[i] = (b[i] + b[i] * rates[i] * dt + sigma * b[i] * dw[i]).max(0.0);
            }
            if params.effort == EffortMode::Full {
                *e =
                    (effort + (params.a - (bq + params.c) * effort) * dt + sigma_e * effort * dw_e)
                        .max(0.0);
            }
        }
    }
}

/// Per-path controller: stateless policies are evaluated directly, the
/// feedback rule keeps its own state.
enum Controller<'a> {
    Static(&'a QuotaPolicy),
    Feedback(FeedbackState),
}

impl<'a> Controller<'a> {
    fn start(policy: &'a QuotaPolicy, b: &[f64]) -> (Self, Vec<f64>) {
        match &policy.kind {
            PolicyKind::Feedback { omega, u0 } => {
                let st = FeedbackState::new(u0.clone(), b.to_vec(), *omega, policy.lo, policy.hi);
                let u = st.u.clone();
                (Controller::Feedback(st), u)
            }
            _ => (Controller::Static(policy), policy.eval(b, 0.0)),
        }
    }

    fn next(&mut self, b: &[f64], t: f64) -> Vec<f64> {
        match self {
            Controller::Static(p) => p.eval(b, t),
            Controller::Feedback(st) => {
                st.update(b);
                st.u.clone()
            }
        }
    }
}

/// Simulate one path, calling `visit(k, b_k, e_k, u_k)` for `k = 0..=n`.
/// Without a random stream the path is noise-free.
pub(crate) fn run_path(
    params: &ModelParams,
    policy: &QuotaPolicy,
    n: usize,
    dt: f64,
    mut noise: Option<&mut ChaCha8Rng>,
    mut visit: impl FnMut(usize, &[f64], f64, &[f64]),
) -> Result<()> {
    let d = params.dim();
    let mut b = params.b0.clone();
    let mut e = params.e0;
    if let Some(r) = noise.as_deref_mut() {
        for x in b.iter_mut() {
            *x = (*x + params.sigma_init * rng::normal(r)).max(0.0);
        }
        e = (e + params.sigma_init * rng::normal(r)).max(0.0);
    }
    let (mut ctl, mut u) = Controller::start(policy, &b);
    visit(0, &b, e, &u);
    let sqdt = dt.sqrt();
    let mut dw = vec![0.0; d];
    for k in 0..n {
        let mut dw_e = 0.0;
        if let Some(r) = noise.as_deref_mut() {
            for w in dw.iter_mut() {
                *w = sqdt * rng::normal(r);
            }
            dw_e = sqdt * rng::normal(r);
        }
        step(params, &mut b, &mut e, &u, dt, &dw, dw_e);
        let t = (k + 1) as f64 * dt;
        if b.iter().any(|x| !x.is_finite()) || !e.is_finite() {
            return Err(Error::IntegrationFailure { time: t });
        }
        u = ctl.next(&b, t);
        visit(k + 1, &b, e, &u);
    }
    Ok(())
}

fn record(
    params: &ModelParams,
    policy: &QuotaPolicy,
    dt: f64,
    noise: Option<(&mut ChaCha8Rng, u64)>,
) -> Result<Trajectory> {
    let (n, dt) = params.time_grid(dt)?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        seed: None,
    };
    let (rng, seed) = match noise {
        Some((r, s)) => (Some(r), Some(s)),
        None => (None, None),
    };
    traj.seed = seed;
    run_path(params, policy, n, dt, rng, |k, b, e, u| {
        let t = k as f64 * dt;
        traj.times.push(t);
        traj.states.push(State {
            b: b.to_vec(),
            e,
            t,
        });
        traj.controls.push(u.to_vec());
    })?;
    Ok(traj)
}

fn check_inputs(params: &ModelParams, policy: &QuotaPolicy) -> Result<()> {
    params.validate()?;
    policy.validate(params.dim())
}

/// Noise-free integration from the mean initial state.
pub fn solve_deterministic(
    params: &ModelParams,
    policy: &QuotaPolicy,
    dt: f64,
) -> Result<Trajectory> {
    check_inputs(params, policy)?;
    record(params, policy, dt, None)
}

/// `n_paths` Euler–Maruyama paths; path `k` draws from substream `k` of
/// `seed`, so output is independent of thread scheduling.
pub fn simulate_paths(
    params: &ModelParams,
    policy: &QuotaPolicy,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    check_inputs(params, policy)?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, k as u64);
            record(params, policy, dt, Some((&mut r, seed)))
        })
        .collect()
}
