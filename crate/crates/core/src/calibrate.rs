//! Identification of `z = [r, κ, a, c]` for a single species from
//! biomass and effort observed on two dates, with `q` known.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{train_regressor, Mlp, TrainConfig};
use crate::rng;
use crate::sde::{step, ModelParams};

/// Model coefficients in the order `[r, κ, a, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub r: f64,
    pub kappa: f64,
    pub a: f64,
    pub c: f64,
}

impl CoefficientVector {
    pub fn new(r: f64, kappa: f64, a: f64, c: f64) -> Self {
        Self { r, kappa, a, c }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.kappa, self.a, self.c]
    }

    pub fn from_array(z: [f64; 4]) -> Self {
        Self::new(z[0], z[1], z[2], z[3])
    }

    pub fn scaled(self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|x| x * s))
    }

    pub fn is_admissible(&self) -> bool {
        self.r > 0.0
            && self.kappa > 0.0
            && self.a >= 0.0
            && self.c >= 0.0
            && self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "coefficients need r > 0, kappa > 0, a >= 0, c >= 0; got {self:?}"
            )))
        }
    }
}

/// `[B(t₁), E(t₁), B(t₂), E(t₂)]` together with the two dates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub t1: f64,
    pub t2: f64,
    pub z: [f64; 4],
}

impl ObservationVector {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t2 >= self.t1) {
            return Err(Error::InvalidArgument(format!(
                "observation dates need 0 < t1 <= t2, got t1 = {}, t2 = {}",
                self.t1, self.t2
            )));
        }
        if self.z.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "observations must be non-negative, got {:?}",
                self.z
            )));
        }
        Ok(())
    }
}

/// Known quantities of the calibration problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub q: f64,
    pub b0: f64,
    pub e0: f64,
    pub t1: f64,
    pub t2: f64,
    /// Step of the noisy simulation; the noise-free map always uses RK4.
    #[serde(default = "default_sde_dt")]
    pub sde_dt: f64,
}

fn default_sde_dt() -> f64 {
    1e-4
}

/// Runge–Kutta step used by the noise-free observation map.
const RK4_DT: f64 = 1e-4;

impl CalibrationSetup {
    /// Initial data and dates of the reference identification experiment.
    pub fn reference() -> Self {
        Self {
            q: 1.0,
            b0: 0.1,
            e0: 0.1,
            t1: 1.0 / 14.0,
            t2: 1.0,
            sde_dt: default_sde_dt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t2 >= self.t1) {
            return Err(Error::InvalidArgument(format!(
                "observation dates need 0 < t1 <= t2, got t1 = {}, t2 = {}",
                self.t1, self.t2
            )));
        }
        if !(self.q >= 0.0 && self.b0 >= 0.0 && self.e0 >= 0.0) {
            return Err(Error::InvalidArgument(
                "q, B0 and E0 must be non-negative".into(),
            ));
        }
        if !(self.sde_dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sde_dt must be positive, got {}",
                self.sde_dt
            )));
        }
        Ok(())
    }

    fn with_dates(&self, t1: f64, t2: f64) -> Self {
        Self { t1, t2, ..*self }
    }
}

fn rhs(z: &[f64; 4], q: f64, b: f64, e: f64) -> (f64, f64) {
    let [r, kappa, a, c] = *z;
    (b * (r - kappa * b - q * e), a - (q * b + c) * e)
}

fn rk4_advance(z: &[f64; 4], q: f64, state: (f64, f64), span: f64) -> (f64, f64) {
    if span <= 0.0 {
        return state;
    }
    let n = (span / RK4_DT).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let (mut b, mut e) = state;
    for _ in 0..n {
        let k1 = rhs(z, q, b, e);
        let k2 = rhs(z, q, b + 0.5 * h * k1.0, e + 0.5 * h * k1.1);
        let k3 = rhs(z, q, b + 0.5 * h * k2.0, e + 0.5 * h * k2.1);
        let k4 = rhs(z, q, b + h * k3.0, e + h * k3.1);
        b += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        e += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (b, e)
}

/// Noise-free observation map `z ↦ Z(z)`.
pub fn observation_map(z: &CoefficientVector, setup: &CalibrationSetup) -> Result<[f64; 4]> {
    let za = z.to_array();
    let s1 = rk4_advance(&za, setup.q, (setup.b0, setup.e0), setup.t1);
    let s2 = rk4_advance(&za, setup.q, s1, setup.t2 - setup.t1);
    let out = [s1.0, s1.1, s2.0, s2.1];
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::IntegrationFailure { time: setup.t2 });
    }
    Ok(out)
}

fn noisy_advance(
    params: &ModelParams,
    q: f64,
    b: &mut f64,
    e: &mut f64,
    span: f64,
    dt0: f64,
    r: &mut rand_chacha::ChaCha8Rng,
) {
    if span <= 0.0 {
        return;
    }
    let n = (span / dt0).ceil().max(1.0) as usize;
    let dt = span / n as f64;
    let sq = dt.sqrt();
    let mut bv = [*b];
    for _ in 0..n {
        let dw = [sq * rng::normal(r)];
        let dwe = sq * rng::normal(r);
        step(params, &mut bv, e, &[q], dt, &dw, dwe);
    }
    *b = bv[0];
}

/// Observations of one simulated path. With `sigma = 0` this is the
/// noise-free map; otherwise the biomass and effort carry multiplicative
/// noise of intensity `sigma` and the initial data are perturbed by
/// `sigma·N(0,1)` (clamped at zero).
pub fn synthesize_observations(
    z: &CoefficientVector,
    setup: &CalibrationSetup,
    sigma: f64,
    seed: u64,
) -> Result<ObservationVector> {
    z.validate()?;
    setup.validate()?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    let values = if sigma == 0.0 {
        observation_map(z, setup)?
    } else {
        let params = ModelParams::single_species(
            z.r, z.kappa, z.a, z.c, setup.q, setup.b0, setup.e0, setup.t2,
        )
        .with_noise(sigma);
        let mut r = rng::substream(seed, 0);
        let mut b = (setup.b0 + sigma * rng::normal(&mut r)).max(0.0);
        let mut e = (setup.e0 + sigma * rng::normal(&mut r)).max(0.0);
        noisy_advance(
            &params,
            setup.q,
            &mut b,
            &mut e,
            setup.t1,
            setup.sde_dt,
            &mut r,
        );
        let first = (b, e);
        noisy_advance(
            &params,
            setup.q,
            &mut b,
            &mut e,
            setup.t2 - setup.t1,
            setup.sde_dt,
            &mut r,
        );
        let out = [first.0, first.1, b, e];
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::IntegrationFailure { time: setup.t2 });
        }
        out
    };
    Ok(ObservationVector {
        t1: setup.t1,
        t2: setup.t2,
        z: values,
    })
}

/// `n` independent noisy observation vectors, sample `k` using stream `k`.
pub fn synthesize_samples(
    z: &CoefficientVector,
    setup: &CalibrationSetup,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<ObservationVector>> {
    (0..n)
        .into_par_iter()
        .map(|k| {
            use rand::Rng;
            synthesize_observations(z, setup, sigma, rng::substream2(seed, 1, k as u64).random())
        })
        .collect()
}

/// Settings of the quasi-Newton root finder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative step of the finite-difference Jacobian.
    pub fd_step: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootResult {
    pub z: CoefficientVector,
    /// Euclidean norm of `Z(z) − Z_target` at `z`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn residual_at(
    z: &Vector4<f64>,
    target: &[f64; 4],
    setup: &CalibrationSetup,
) -> Option<Vector4<f64>> {
    let c = CoefficientVector::from_array([z[0], z[1], z[2], z[3]]);
    if !c.is_admissible() {
        return None;
    }
    let m = observation_map(&c, setup).ok()?;
    Some(Vector4::from_fn(|i, _| m[i] - target[i]))
}

fn fd_jacobian(
    z: &Vector4<f64>,
    target: &[f64; 4],
    setup: &CalibrationSetup,
    rel: f64,
) -> Option<Matrix4<f64>> {
    let mut jac = Matrix4::zeros();
    for j in 0..4 {
        let h = rel * z[j].abs().max(1.0);
        let mut zp = *z;
        zp[j] += h;
        let mut zm = *z;
        zm[j] -= h;
        let col = match (
            residual_at(&zp, target, setup),
            residual_at(&zm, target, setup),
        ) {
            (Some(p), Some(m)) => (p - m) / (2.0 * h),
            (Some(p), None) => (p - residual_at(z, target, setup)?) / h,
            (None, Some(m)) => (residual_at(z, target, setup)? - m) / h,
            (None, None) => return None,
        };
        jac.set_column(j, &col);
    }
    Some(jac)
}

/// Solve `Z(z) = Z_target` by Broyden's ("good") method with a
/// finite-difference initial Jacobian, backtracking on the residual norm and
/// a finite-difference reset whenever the update turns singular or fails to
/// produce descent. On non-convergence the best iterate is returned with
/// `converged = false`.
pub fn calibrate_root(
    target: &ObservationVector,
    z0: &CoefficientVector,
    setup: &CalibrationSetup,
    opts: &RootOptions,
) -> Result<RootResult> {
    target.validate()?;
    z0.validate()?;
    let setup = setup.with_dates(target.t1, target.t2);
    setup.validate()?;
    let tz = target.z;
    let mut z = Vector4::from(z0.to_array());
    let mut f = residual_at(&z, &tz, &setup).ok_or(Error::IntegrationFailure { time: setup.t2 })?;
    let mut jac: Option<Matrix4<f64>> = None;
    let mut fresh = false;
    let mut iterations = 0;

    while f.norm() >= opts.tol && iterations < opts.max_iter {
        if jac.is_none() {
            jac = fd_jacobian(&z, &tz, &setup, opts.fd_step);
            fresh = true;
            if jac.is_none() {
                break;
            }
        }
        let j = jac.expect("jacobian set above");
        let Some(p) = j.lu().solve(&(-f)) else {
            if fresh {
                break;
            }
            jac = None;
            continue;
        };
        let f_norm = f.norm();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = z + alpha * p;
            if let Some(ft) = residual_at(&trial, &tz, &setup) {
                if ft.norm() < (1.0 - 1e-4 * alpha) * f_norm {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((zn, fnew)) => {
                let dz = zn - z;
                let df = fnew - f;
                let denom = dz.dot(&dz);
                if denom > 0.0 {
                    jac = Some(j + (df - j * dz) * dz.transpose() / denom);
                    fresh = false;
                } else {
                    jac = None;
                }
                z = zn;
                f = fnew;
            }
            None if fresh => break,
            None => jac = None,
        }
    }
    let residual = f.norm();
    Ok(RootResult {
        z: CoefficientVector::from_array([z[0], z[1], z[2], z[3]]),
        residual,
        iterations,
        converged: residual < opts.tol,
    })
}

/// Settings of the simplex least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeastSquaresConfig {
    pub start: CoefficientVector,
    /// Initial simplex edge, relative to the start point.
    pub initial_step: f64,
    /// Stop when the spread of objective values over the simplex falls below.
    pub f_tol: f64,
    /// Stop when the simplex diameter (relative) falls below.
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for LeastSquaresConfig {
    fn default() -> Self {
        Self {
            start: CoefficientVector::new(1.0, 1.0, 1.0, 1.0),
            initial_step: 0.1,
            f_tol: 1e-22,
            x_tol: 1e-10,
            max_evals: 20_000,
        }
    }
}

/// Settings of the neural regressor `Z ↦ z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    /// Number of synthetic training pairs.
    pub m: usize,
    /// Centre of the coefficient sampling box.
    pub z_ref: CoefficientVector,
    /// Coefficients are drawn uniformly in `[(1 − spread)·z_ref, (1 + spread)·z_ref]`.
    pub spread: f64,
    /// Noise of the simulated training observations.
    pub training_sigma: f64,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            z_ref: CoefficientVector::new(2.0, 1.0, 1.1, 1.0),
            spread: 0.5,
            training_sigma: 0.0,
            hidden: vec![100, 100],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibrationMethod {
    LeastSquares(LeastSquaresConfig),
    Regressor(RegressorConfig),
}

/// Point estimate and per-coefficient spread of a sample calibration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCalibration {
    pub z_hat: CoefficientVector,
    /// Standard deviation of the per-sample estimates, `[r, κ, a, c]`.
    pub dispersion: [f64; 4],
    pub estimates: Vec<CoefficientVector>,
    /// False when the optimizer stagnated before meeting its tolerance.
    pub converged: bool,
    /// Per-epoch training loss of the regressor.
    pub loss_history: Vec<f64>,
}

/// Network with input and output standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRegressor {
    pub net: Mlp,
    pub x_mean: [f64; 4],
    pub x_std: [f64; 4],
    pub y_mean: [f64; 4],
    pub y_std: [f64; 4],
}

impl CoefficientRegressor {
    pub fn predict(&self, obs: &ObservationVector) -> CoefficientVector {
        let x: Vec<f64> = (0..4)
            .map(|i| (obs.z[i] - self.x_mean[i]) / self.x_std[i])
            .collect();
        let y = self.net.eval(&x).expect("regressor input is 4-dimensional");
        CoefficientVector::from_array(std::array::from_fn(|i| {
            self.y_mean[i] + self.y_std[i] * y[i]
        }))
    }
}

fn moments(rows: &[[f64; 4]]) -> ([f64; 4], [f64; 4]) {
    let n = rows.len() as f64;
    let mean: [f64; 4] = std::array::from_fn(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n);
    let std: [f64; 4] = std::array::from_fn(|i| {
        let v = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        v.sqrt()
    });
    (mean, std)
}

/// Build the synthetic training set and fit the regressor.
pub fn train_coefficient_regressor(
    setup: &CalibrationSetup,
    sigma: f64,
    config: &RegressorConfig,
) -> Result<(CoefficientRegressor, Vec<f64>)> {
    setup.validate()?;
    config.z_ref.validate()?;
    if config.m < 2 {
        return Err(Error::InvalidArgument(
            "the regressor needs at least two training pairs".into(),
        ));
    }
    if !(config.spread >= 0.0 && config.spread < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "spread must lie in [0, 1), got {}",
            config.spread
        )));
    }
    let seed = config.train.seed;
    let zr = config.z_ref.to_array();
    let pairs: Vec<([f64; 4], [f64; 4])> = (0..config.m)
        .into_par_iter()
        .map(|j| {
            use rand::Rng;
            let mut r = rng::substream2(seed, 2, j as u64);
            let z: [f64; 4] = std::array::from_fn(|i| {
                zr[i] * (1.0 + config.spread * (2.0 * r.random::<f64>() - 1.0))
            });
            let obs = synthesize_observations(
                &CoefficientVector::from_array(z),
                setup,
                sigma,
                r.random::<u64>(),
            )?;
            Ok((obs.z, z))
        })
        .collect::<Result<_>>()?;
    let xs: Vec<[f64; 4]> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<[f64; 4]> = pairs.iter().map(|p| p.1).collect();
    let (x_mean, mut x_std) = moments(&xs);
    let (y_mean, mut y_std) = moments(&ys);
    for s in x_std.iter_mut().chain(y_std.iter_mut()) {
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }
    let inputs: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..4).map(|i| (x[i] - x_mean[i]) / x_std[i]).collect())
        .collect();
    let targets: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| (0..4).map(|i| (y[i] - y_mean[i]) / y_std[i]).collect())
        .collect();
    let fit = train_regressor(&inputs, &targets, &config.hidden, &config.train)?;
    Ok((
        CoefficientRegressor {
            net: fit.net,
            x_mean,
            x_std,
            y_mean,
            y_std,
        },
        fit.loss_history,
    ))
}

fn nelder_mead(
    f: impl Fn(&[f64; 4]) -> f64,
    start: [f64; 4],
    cfg: &LeastSquaresConfig,
) -> ([f64; 4], bool) {
    let mut simplex: Vec<[f64; 4]> = vec![start];
    for i in 0..4 {
        let mut v = start;
        v[i] += cfg.initial_step * if v[i] != 0.0 { v[i].abs() } else { 1.0 };
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(&f).collect();
    let mut evals = 5;
    let combine = |a: &[f64; 4], b: &[f64; 4], t: f64| -> [f64; 4] {
        std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
    };
    loop {
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&k| simplex[k]).collect();
        vals = order.iter().map(|&k| vals[k]).collect();
        let scale = simplex[0].iter().map(|x| x.abs()).fold(1.0, f64::max);
        let diam = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if vals[4] - vals[0] <= cfg.f_tol && diam <= cfg.x_tol * scale {
            return (simplex[0], true);
        }
        if diam <= 1e-3 * cfg.x_tol * scale {
            return (simplex[0], vals[4] - vals[0] <= cfg.f_tol.max(1e-30));
        }
        if evals >= cfg.max_evals {
            return (simplex[0], false);
        }
        let centroid: [f64; 4] =
            std::array::from_fn(|i| simplex[..4].iter().map(|v| v[i]).sum::<f64>() / 4.0);
        let reflected = combine(&centroid, &simplex[4], -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = combine(&centroid, &simplex[4], -2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[4] = expanded;
                vals[4] = fe;
            } else {
                simplex[4] = reflected;
                vals[4] = fr;
            }
            continue;
        }
        if fr < vals[3] {
            simplex[4] = reflected;
            vals[4] = fr;
            continue;
        }
        let (contracted, fc) = if fr < vals[4] {
            let c = combine(&centroid, &simplex[4], -0.5);
            let v = f(&c);
            (c, v)
        } else {
            let c = combine(&centroid, &simplex[4], 0.5);
            let v = f(&c);
            (c, v)
        };
        evals += 1;
        if fc < vals[4].min(fr) {
            simplex[4] = contracted;
            vals[4] = fc;
            continue;
        }
        let best = simplex[0];
        for k in 1..5 {
            simplex[k] = combine(&best, &simplex[k], 0.5);
            vals[k] = f(&simplex[k]);
        }
        evals += 4;
    }
}

/// Calibrate from a set of noisy observation vectors sharing the same
/// dates. Samples are simulated from the known initial data in `setup`.
pub fn calibrate_samples(
    samples: &[ObservationVector],
    setup: &CalibrationSetup,
    method: &CalibrationMethod,
) -> Result<SampleCalibration> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument(
            "at least one observation sample is required".into(),
        ));
    };
    for s in samples {
        s.validate()?;
        if s.t1 != first.t1 || s.t2 != first.t2 {
            return Err(Error::InvalidArgument(
                "all samples must share the observation dates".into(),
            ));
        }
    }
    let setup = setup.with_dates(first.t1, first.t2);
    setup.validate()?;
    match method {
        CalibrationMethod::LeastSquares(cfg) => {
            cfg.start.validate()?;
            let n = samples.len() as f64;
            let objective = |z: &[f64; 4]| -> f64 {
                let c = CoefficientVector::from_array(*z);
                if !c.is_admissible() {
                    return f64::INFINITY;
                }
                match observation_map(&c, &setup) {
                    Ok(m) => {
                        samples
                            .iter()
                            .map(|s| (0..4).map(|i| (m[i] - s.z[i]).powi(2)).sum::<f64>())
                            .sum::<f64>()
                            / n
                    }
                    Err(_) => f64::INFINITY,
                }
            };
            let (best, converged) = nelder_mead(objective, cfg.start.to_array(), cfg);
            let z_hat = CoefficientVector::from_array(best);
            let estimates: Vec<CoefficientVector> = samples
                .par_iter()
                .map(|s| {
                    let res = calibrate_root(s, &z_hat, &setup, &RootOptions::default())?;
                    Ok(res.z)
                })
                .collect::<Result<_>>()?;
            let rows: Vec<[f64; 4]> = estimates.iter().map(|e| e.to_array()).collect();
            let (_, dispersion) = moments(&rows);
            Ok(SampleCalibration {
                z_hat,
                dispersion: if rows.len() > 1 { dispersion } else { [0.0; 4] },
                estimates,
                converged,
                loss_history: Vec::new(),
            })
        }
        CalibrationMethod::Regressor(cfg) => {
            let (reg, loss_history) = train_coefficient_regressor(&setup, cfg.training_sigma, cfg)?;
            let estimates: Vec<CoefficientVector> =
                samples.iter().map(|s| reg.predict(s)).collect();
            let rows: Vec<[f64; 4]> = estimates.iter().map(|e| e.to_array()).collect();
            let (mean, dispersion) = moments(&rows);
            let converged = loss_history.iter().all(|l| l.is_finite());
            Ok(SampleCalibration {
                z_hat: CoefficientVector::from_array(mean),
                dispersion: if rows.len() > 1 { dispersion } else { [0.0; 4] },
                estimates,
                converged,
                loss_history,
            })
        }
    }
}

/// Observation set as CSV with header `t1,B1,E1,t2,B2,E2`.
pub fn write_observations(samples: &[ObservationVector]) -> String {
    let mut out = String::from("t1,B1,E1,t2,B2,E2\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.t1, s.z[0], s.z[1], s.t2, s.z[2], s.z[3]
        ));
    }
    out
}

pub fn read_observations(text: &str) -> Result<Vec<ObservationVector>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h))
            if h.split(',')
                .map(str::trim)
                .eq(["t1", "B1", "E1", "t2", "B2", "E2"]) => {}
        _ => {
            return Err(Error::Parse(
                "observation CSV must start with header t1,B1,E1,t2,B2,E2".into(),
            ))
        }
    }
    lines
        .map(|(no, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?;
            if v.len() != 6 {
                return Err(Error::Parse(format!(
                    "line {}: expected 6 fields, got {}",
                    no + 1,
                    v.len()
                )));
            }
            let obs = ObservationVector {
                t1: v[0],
                t2: v[3],
                z: [v[1], v[2], v[4], v[5]],
            };
            obs.validate()
                .map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?;
            Ok(obs)
        })
        .collect()
}
