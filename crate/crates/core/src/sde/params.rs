use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Whether the fishing effort is integrated alongside the biomass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortMode {
    /// Biomass only; the control is the effort-aggregated harvest rate `u = Q·E`.
    #[default]
    Reduced,
    /// Biomass and effort; the control is the per-effort quota `Q` and the
    /// harvest rate is `Q·E`.
    Full,
}

/// Time-stepping scheme for the multiplicative-noise dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on `log B`; positive by construction.
    #[default]
    LogEuler,
    /// Plain Euler–Maruyama with the state clamped at zero after each step.
    ClampedEuler,
}

/// Coefficients of the single-site multi-species model.
///
/// Biomass follows `dB = B⋆[(r − κB − u)dt + σ dW]` (independent Brownian
/// motions per species) and, in [`EffortMode::Full`], the effort follows
/// `dE = (a − (B·Q + c)E)dt + σ′E dW′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: Vec<f64>,
    /// Capacity matrix, row `i` holds the influence of every species on `i`.
    pub kappa: Vec<Vec<f64>>,
    pub sigma: f64,
    pub sigma_prime: f64,
    /// Standard deviation of the initial biomass and effort perturbations.
    pub sigma_init: f64,
    /// Effort inflow.
    pub a: f64,
    /// Operating cost rate.
    pub c: f64,
    /// Catchability.
    pub q: f64,
    /// Reward weight on the quota (enters the objective with a minus sign).
    pub alpha: Vec<f64>,
    /// Penalty weight on the quadratic variation of the quota.
    pub beta: Vec<f64>,
    /// Target biomass.
    pub b_desired: Vec<f64>,
    /// Weight of the `|B − B^d|²` tracking term.
    #[serde(default = "one")]
    pub tracking_weight: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub horizon: f64,
    pub b0: Vec<f64>,
    pub e0: f64,
    #[serde(default)]
    pub effort: EffortMode,
    #[serde(default)]
    pub scheme: Scheme,
}

fn one() -> f64 {
    1.0
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    /// Two competing species with noise 0.1, quota box [0.4, 1.4] and a
    /// horizon of 2. The target biomass defaults to (1, 1).
    pub fn two_species() -> Self {
        Self {
            r: vec![1.5, 1.5],
            kappa: vec![vec![1.2, -0.1], vec![0.1, 1.2]],
            sigma: 0.1,
            sigma_prime: 0.1,
            sigma_init: 0.1,
            a: 1.0,
            c: 1.0,
            q: 1.3,
            alpha: vec![0.1, 0.1],
            beta: vec![0.02, 0.02],
            b_desired: vec![1.0, 1.0],
            tracking_weight: 1.0,
            u_min: 0.4,
            u_max: 1.4,
            horizon: 2.0,
            b0: vec![1.2, 0.8],
            e0: 1.0,
            effort: EffortMode::Reduced,
            scheme: Scheme::LogEuler,
        }
    }

    /// Single species with effort dynamics and no quota: the control is the
    /// catchability `q` itself, so the harvest is `qE`.
    pub fn single_species(
        r: f64,
        kappa: f64,
        a: f64,
        c: f64,
        q: f64,
        b0: f64,
        e0: f64,
        horizon: f64,
    ) -> Self {
        Self {
            r: vec![r],
            kappa: vec![vec![kappa]],
            sigma: 0.0,
            sigma_prime: 0.0,
            sigma_init: 0.0,
            a,
            c,
            q,
            alpha: vec![0.0],
            beta: vec![0.0],
            b_desired: vec![0.0],
            tracking_weight: 0.0,
            u_min: q,
            u_max: q,
            horizon,
            b0: vec![b0],
            e0,
            effort: EffortMode::Full,
            scheme: Scheme::LogEuler,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self.sigma_prime = sigma;
        self.sigma_init = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidArgument(
                "at least one species is required".into(),
            ));
        }
        check_dim("kappa rows", d, self.kappa.len())?;
        for row in &self.kappa {
            check_dim("kappa columns", d, row.len())?;
        }
        check_dim("alpha", d, self.alpha.len())?;
        check_dim("beta", d, self.beta.len())?;
        check_dim("b_desired", d, self.b_desired.len())?;
        check_dim("b0", d, self.b0.len())?;
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.u_min <= self.u_max) {
            return Err(Error::InvalidArgument(format!(
                "u_min ({}) must not exceed u_max ({})",
                self.u_min, self.u_max
            )));
        }
        for (name, s) in [
            ("sigma", self.sigma),
            ("sigma_prime", self.sigma_prime),
            ("sigma_init", self.sigma_init),
        ] {
            if !(s >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {s}"
                )));
            }
        }
        for i in 0..d {
            if !(self.kappa[i][i] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "kappa[{i}][{i}] must be positive (self-limitation), got {}",
                    self.kappa[i][i]
                )));
            }
        }
        if self.b0.iter().any(|&b| !(b >= 0.0)) || !(self.e0 >= 0.0) {
            return Err(Error::InvalidArgument(
                "initial biomass and effort must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps and the exact step `T/N` for a requested `dt`.
    pub fn time_grid(&self, dt: f64) -> Result<(usize, f64)> {
        if !(dt > 0.0) || dt > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "time step must satisfy 0 < dt <= T = {}, got {dt}",
                self.horizon
            )));
        }
        let ratio = self.horizon / dt;
        let n = if (ratio - ratio.round()).abs() < 1e-9 {
            ratio.round()
        } else {
            ratio.ceil()
        } as usize;
        Ok((n.max(1), self.horizon / n.max(1) as f64))
    }
}
