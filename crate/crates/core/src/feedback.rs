//! Derivative feedback rule `u(t+δt) = u(t) + ω(B(t) − B(t−δt))`.
//!
//! The rule only ever looks at biomass increments, so it holds the stock
//! near wherever it started; it has no notion of a target biomass.

use serde::Serialize;

use crate::error::Result;
use crate::sde::{simulate_paths, ModelParams, QuotaPolicy, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackState {
    pub u: Vec<f64>,
    pub prev_b: Vec<f64>,
    /// Gain, 1/biomass.
    pub omega: f64,
    pub lo: f64,
    pub hi: f64,
}

impl FeedbackState {
    /// `u0` is clamped into `[lo, hi]`. Pass infinite bounds for the
    /// unconstrained rule.
    pub fn new(u0: Vec<f64>, b_init: Vec<f64>, omega: f64, lo: f64, hi: f64) -> Self {
        let u = u0.into_iter().map(|v| v.clamp(lo, hi)).collect();
        Self {
            u,
            prev_b: b_init,
            omega,
            lo,
            hi,
        }
    }

    pub fn update(&mut self, b_now: &[f64]) {
        for ((u, prev), b) in self.u.iter_mut().zip(self.prev_b.iter_mut()).zip(b_now) {
            *u = (*u + self.omega * (b - *prev)).clamp(self.lo, self.hi);
            *prev = *b;
        }
    }
}

/// One application of the rule followed by the clamp.
pub fn feedback_update(state: &FeedbackState, b_now: &[f64]) -> FeedbackState {
    let mut next = state.clone();
    next.update(b_now);
    next
}

/// Closed-loop Euler–Maruyama paths under the feedback rule. The quota
/// starts at `u0`, or at the middle of the box when `None`.
pub fn run_feedback(
    params: &ModelParams,
    omega: f64,
    u0: Option<Vec<f64>>,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let u0 = u0.unwrap_or_else(|| vec![0.5 * (params.u_min + params.u_max); params.dim()]);
    let policy = QuotaPolicy::feedback(omega, u0, params.u_min, params.u_max);
    simulate_paths(params, &policy, dt, n_paths, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(u: f64, omega: f64) -> FeedbackState {
        FeedbackState::new(vec![u], vec![1.0], omega, 0.4, 1.4)
    }

    #[test]
    fn unchanged_biomass_keeps_quota() {
        let s = feedback_update(&state(1.0, 100.0), &[1.0]);
        assert_eq!(s.u, vec![1.0]);
    }

    #[test]
    fn increase_is_clamped_to_upper_bound() {
        let s = feedback_update(&state(1.0, 100.0), &[1.01]);
        assert_eq!(s.u, vec![1.4]);
        assert_eq!(s.prev_b, vec![1.01]);
    }

    #[test]
    fn decrease_lowers_quota() {
        let s = feedback_update(&state(1.0, 100.0), &[0.998]);
        assert!((s.u[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unbounded_rule_follows_formula_exactly() {
        let mut s = FeedbackState::new(
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            3.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        s.update(&[2.0, 0.0]);
        assert_eq!(s.u, vec![3.0, -5.0]);
    }
}
