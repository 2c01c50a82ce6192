//! Single-site multi-species model: deterministic and stochastic
//! integration and Monte-Carlo evaluation of the quota objective.

mod cost;
mod integrate;
mod params;
mod policy;

pub use cost::{
    estimate_cost, estimate_cost_with, path_costs, quadratic_variation, CostEstimate, QvMode,
};
pub use integrate::{drift_eval, simulate_paths, solve_deterministic, step, State, Trajectory};

pub use params::{EffortMode, ModelParams, Scheme};
pub use policy::{PolicyKind, QuotaPolicy};
