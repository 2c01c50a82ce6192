use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::run_path;
use super::{ModelParams, QuotaPolicy, Trajectory};
use crate::error::{Error, Result};
use crate::rng;

/// How the quadratic variation of the quota is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QvMode {
    /// Sum of squared control increments along the path.
    #[default]
    Discrete,
    /// Itô limit `∫ Σ_j (σ B_j ∂u_i/∂B_j)² dt`, using the policy's derivative.
    Ito,
}

/// Quadratic variation of the control along `traj`, one value per species.
pub fn quadratic_variation(
    traj: &Trajectory,
    policy: &QuotaPolicy,
    sigma: f64,
    mode: QvMode,
) -> Result<Vec<f64>> {
    let d = traj.controls.first().map_or(0, |u| u.len());
    let mut qv = vec![0.0; d];
    match mode {
        QvMode::Discrete => {
            for w in traj.controls.windows(2) {
                for i in 0..d {
                    let du = w[1][i] - w[0][i];
                    qv[i] += du * du;
                }
            }
        }
        QvMode::Ito => {
            for k in 0..traj.len().saturating_sub(1) {
                let dt = traj.times[k + 1] - traj.times[k];
                let b = &traj.states[k].b;
                add_ito_rate(&mut qv, &policy.jacobian(b)?, b, sigma, dt);
            }
        }
    }
    Ok(qv)
}

#[inline]
fn add_ito_rate(qv: &mut [f64], jac: &[Vec<f64>], b: &[f64], sigma: f64, dt: f64) {
    for (q, row) in qv.iter_mut().zip(jac) {
        let rate: f64 = row
            .iter()
            .zip(b)
            .map(|(g, x)| (sigma * x * g).powi(2))
            .sum();
        *q += rate * dt;
    }
}

/// Monte-Carlo estimate of the quota objective with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// Pathwise objective
/// `∫₀ᵀ (w|B − B^d|² − α·u) dt + Σ_i β_i [u_i]_T`
/// averaged over `n_paths` simulated paths, with the discrete quadratic
/// variation.
pub fn estimate_cost(
    params: &ModelParams,
    policy: &QuotaPolicy,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CostEstimate> {
    estimate_cost_with(params, policy, dt, n_paths, seed, QvMode::Discrete)
}

pub fn estimate_cost_with(
    params: &ModelParams,
    policy: &QuotaPolicy,
    dt: f64,
    n_paths: usize,
    seed: u64,
    qv: QvMode,
) -> Result<CostEstimate> {
    let costs = path_costs(params, policy, dt, n_paths, seed, qv)?;
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = if costs.len() > 1 {
        costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(CostEstimate {
        mean,
        std_err: (var / n).sqrt(),
        n_paths: costs.len(),
    })
}

/// Objective value of every path, in path order.
pub fn path_costs(
    params: &ModelParams,
    policy: &QuotaPolicy,
    dt: f64,
    n_paths: usize,
    seed: u64,
    qv: QvMode,
) -> Result<Vec<f64>> {
    params.validate()?;
    policy.validate(params.dim())?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    if qv == QvMode::Ito {
        policy.jacobian(&params.b0)?;
    }
    let (n, dt) = params.time_grid(dt)?;
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, k as u64);
            single_path_cost(params, policy, n, dt, &mut r, qv)
        })
        .collect()
}

fn single_path_cost(
    params: &ModelParams,
    policy: &QuotaPolicy,
    n: usize,
    dt: f64,
    r: &mut rand_chacha::ChaCha8Rng,
    mode: QvMode,
) -> Result<f64> {
    let d = params.dim();
    let mut running = 0.0;
    let mut qv = vec![0.0; d];
    let mut prev_u: Option<Vec<f64>> = None;
    let mut failure = None;
    run_path(params, policy, n, dt, Some(r), |k, b, _e, u| {
        if k < n {
            let track: f64 = b
                .iter()
                .zip(&params.b_desired)
                .map(|(x, t)| (x - t).powi(2))
                .sum();
            let reward: f64 = params.alpha.iter().zip(u).map(|(a, v)| a * v).sum();
            running += dt * (params.tracking_weight * track - reward);
            if mode == QvMode::Ito {
                match policy.jacobian(b) {
                    Ok(j) => add_ito_rate(&mut qv, &j, b, params.sigma, dt),
                    Err(e) => failure = Some(e),
                }
            }
        }
        if mode == QvMode::Discrete {
            if let Some(p) = &prev_u {
                for i in 0..d {
                    qv[i] += (u[i] - p[i]).powi(2);
                }
            }
            prev_u = Some(u.to_vec());
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(running + params.beta.iter().zip(&qv).map(|(b, q)| b * q).sum::<f64>())
}
