//! Feedforward networks, ADAM, and the two trainers built on them: the
//! coefficient regressor and the Markovian quota policy.

mod adam;
mod io;
mod mlp;
mod policy;
mod regressor;

pub use adam::{Adam, TrainConfig};
pub use io::{read_weights, write_weights};
pub use mlp::{mlp_gradient, ForwardCache, Mlp};
pub use policy::{pathwise_gradient, train_policy, PolicyTrainConfig, TrainedPolicy};
pub use regressor::{train_regressor, TrainedRegressor};
