//! Distributed quota control for two species: the Kolmogorov forward
//! equation for the biomass density, its discrete adjoint, the exact
//! gradient of the objective and a projected-gradient optimizer.
//!
//! The operator is a finite-volume Markov-chain discretisation on a
//! cell-centred grid for the drift `B⋆(r − κB − u)` and the Itô diffusion
//! `½σ²∂ᵢᵢ(Bᵢ²ρ)` (independent noise per species, hence no mixed term).
//! Face fluxes are exponentially fitted by default, plain upwind on request.
//! Under the step bound it is monotone, so `ρ ≥ 0` and mass is conserved
//! up to the recorded boundary outflow.

mod optimize;
mod solver;

pub use optimize::{optimize_quota, IterationRecord, OptimizeOptions, QuotaOptimization};
pub use solver::{
    initial_density, objective_gradient, project_box, running_cost, solve_adjoint,
    solve_adjoint_with, solve_forward, solve_forward_with, stable_dt, AdjointField, Boundary,
    DensityField, FluxScheme, KfpScheme,
};
