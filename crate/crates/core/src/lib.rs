//! Quota control for multi-species fishery models.
//!
//! The crate bundles three ways of computing fishing quotas for a
//! stochastic logistic (Lotka–Volterra type) population model and the
//! tooling needed to cross-check them:
//!
//! * [`sde`]: the single-site model, its Euler–Maruyama integration and
//!   Monte-Carlo evaluation of the quota objective.
//! * [`kfp`]: distributed control through the Kolmogorov forward equation
//!   for the biomass density, its adjoint, and projected gradient descent.
//! * [`neural`]: a small multilayer perceptron, ADAM, the coefficient
//!   regressor and the pathwise-gradient quota policy trainer.
//! * [`feedback`]: the derivative feedback rule.
//! * [`calibrate`]: identification of model coefficients from two-date
//!   observations.
//! * [`spatial`]: an open-sea model with plankton, currents, boats and a
//!   global quota.

// `!(x > 0.0)` is used on purpose: it rejects NaN together with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod calibrate;
pub mod error;
pub mod feedback;
pub mod grid;
pub mod io;
pub mod kfp;
pub mod neural;
pub mod rng;
pub mod sde;
pub mod spatial;

pub use error::{Error, Result};
