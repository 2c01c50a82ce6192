use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Adam, ForwardCache, Mlp, TrainConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::sde::{EffortMode, ModelParams, QuotaPolicy, Scheme};

/// Settings of the static (`B ↦ u`) policy trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub hidden: Vec<usize>,
    pub dt: f64,
    pub train: TrainConfig,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50],
            dt: 0.01,
            train: TrainConfig {
                epochs: 200,
                batch_size: 256,
                learning_rate: 1e-3,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: QuotaPolicy,
    /// Batch-mean objective before each optimizer step.
    pub loss_history: Vec<f64>,
}

/// Objective of one simulated path under `net` and its exact gradient with
/// respect to the network parameters, the Brownian increments being held
/// fixed (reparameterised / pathwise gradient).
///
/// The simulation replays exactly what [`crate::sde::estimate_cost`] does
/// for the same random stream: log-Euler steps of the reduced dynamics and
/// the discrete quadratic-variation penalty.
pub fn pathwise_gradient(
    params: &ModelParams,
    net: &Mlp,
    n: usize,
    dt: f64,
    r: &mut ChaCha8Rng,
) -> (f64, Vec<f64>) {
    let d = params.dim();
    let sigma = params.sigma;
    let mut b = params.b0.clone();
    for x in b.iter_mut() {
        *x = (*x + params.sigma_init * rng::normal(r)).max(0.0);
    }
    // effort draw, unused in the reduced dynamics but kept for stream alignment
    let _ = rng::normal(r);

    let sqdt = dt.sqrt();
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut factors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut caches: Vec<ForwardCache> = Vec::with_capacity(n + 1);
    let mut loss = 0.0;

    for k in 0..=n {
        let cache = net.forward_cached(&b);
        let u = &cache.output;
        if k > 0 {
            let prev = &caches[k - 1].output;
            for i in 0..d {
                loss += params.beta[i] * (u[i] - prev[i]).powi(2);
            }
        }
        if k < n {
            let track: f64 = b
                .iter()
                .zip(&params.b_desired)
                .map(|(x, t)| (x - t).powi(2))
                .sum();
            let reward: f64 = params.alpha.iter().zip(u).map(|(a, v)| a * v).sum();
            loss += dt * (params.tracking_weight * track - reward);
            let mut f = vec![0.0; d];
            let mut next = b.clone();
            for i in 0..d {
                let kb: f64 = params.kappa[i].iter().zip(&b).map(|(kk, x)| kk * x).sum();
                let rate = params.r[i] - kb - u[i];
                let dw = sqdt * rng::normal(r);
                f[i] = ((rate - 0.5 * sigma * sigma) * dt + sigma * dw).exp();
                next[i] = b[i] * f[i];
            }
            // effort increment, unused here
            let _ = rng::normal(r);
            factors.push(f);
            states.push(std::mem::replace(&mut b, next));
        } else {
            states.push(b.clone());
        }
        caches.push(cache);
    }

    let mut grad = vec![0.0; net.n_params()];
    let mut g_next = vec![0.0; d];
    for k in (0..=n).rev() {
        let bk = &states[k];
        let uk = &caches[k].output;
        let mut gu = vec![0.0; d];
        let mut gb = vec![0.0; d];
        if k < n {
            let b_next = &states[k + 1];
            for i in 0..d {
                gb[i] += 2.0 * params.tracking_weight * dt * (bk[i] - params.b_desired[i]);
                gu[i] -= params.alpha[i] * dt;
                gu[i] -= 2.0 * params.beta[i] * (caches[k + 1].output[i] - uk[i]);
                gu[i] -= dt * b_next[i] * g_next[i];
            }
            for j in 0..d {
                let coupling: f64 = (0..d)
                    .map(|i| g_next[i] * b_next[i] * params.kappa[i][j])
                    .sum();
                gb[j] += g_next[j] * factors[k][j] - dt * coupling;
            }
        }
        if k > 0 {
            for i in 0..d {
                gu[i] += 2.0 * params.beta[i] * (uk[i] - caches[k - 1].output[i]);
            }
        }
        let gx = net.backward(&caches[k], &gu, &mut grad);
        for j in 0..d {
            gb[j] += gx[j];
        }
        g_next = gb;
    }
    (loss, grad)
}

/// Train a static neural quota `B ↦ u` by ADAM on the Monte-Carlo
/// objective, differentiating through the unrolled simulation.
pub fn train_policy(params: &ModelParams, config: &PolicyTrainConfig) -> Result<TrainedPolicy> {
    params.validate()?;
    config.train.validate()?;
    if params.effort != EffortMode::Reduced || params.scheme != Scheme::LogEuler {
        return Err(Error::Unsupported(
            "policy training differentiates the reduced log-Euler dynamics only".into(),
        ));
    }
    let d = params.dim();
    let (n, dt) = params.time_grid(config.dt)?;
    let mut sizes = vec![d];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(d);
    let mut net = Mlp::random(&sizes, config.train.seed)?.with_clamp(params.u_min, params.u_max);
    // start from a near-constant quota in the middle of the box
    let last = net.n_layers() - 1;
    let (w, _) = net.layer_ranges(last);
    net.params_mut()[w].iter_mut().for_each(|p| *p *= 0.1);
    net.set_output_bias(0.5 * (params.u_min + params.u_max));

    let mut opt = Adam::new(net.n_params(), &config.train);
    let batch = config.train.batch_size;
    let mut history = Vec::with_capacity(config.train.epochs);
    for epoch in 0..config.train.epochs {
        let results: Vec<(f64, Vec<f64>)> = (0..batch)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::substream2(config.train.seed, epoch as u64, k as u64);
                pathwise_gradient(params, &net, n, dt, &mut r)
            })
            .collect();
        let mut grad = vec![0.0; net.n_params()];
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let scale = 1.0 / batch as f64;
        loss *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                last_finite_epoch: epoch.saturating_sub(1),
            });
        }
        history.push(loss);
        opt.step(net.params_mut(), &grad);
    }
    Ok(TrainedPolicy {
        policy: QuotaPolicy::neural(net, params.u_min, params.u_max),
        loss_history: history,
    })
}
