use rand::seq::SliceRandom;

use super::{Adam, Mlp, TrainConfig};
use crate::error::{check_dim, Error, Result};
use crate::neural::mlp_gradient;
use crate::rng;

/// Trained network plus the per-epoch mean squared error.
#[derive(Debug, Clone)]
pub struct TrainedRegressor {
    pub net: Mlp,
    pub loss_history: Vec<f64>,
}

/// Fit a rectifier network `x ↦ y` by mini-batch ADAM on the mean
/// squared error. Deterministic for a given dataset and `config.seed`.
pub fn train_regressor(
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    hidden: &[usize],
    config: &TrainConfig,
) -> Result<TrainedRegressor> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    check_dim("training targets", inputs.len(), targets.len())?;
    let mut sizes = vec![inputs[0].len()];
    sizes.extend_from_slice(hidden);
    sizes.push(targets[0].len());
    let mut net = Mlp::random(&sizes, config.seed)?;
    let mut opt = Adam::new(net.n_params(), config);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::substream(config.seed, epoch as u64 + 1));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let ts: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let (loss, mut grad) = mlp_gradient(&net, &xs, &ts)?;
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(net.params_mut(), &grad);
            epoch_loss += loss;
        }
        let mean = epoch_loss / inputs.len() as f64;
        if !mean.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                last_finite_epoch: epoch.saturating_sub(1),
            });
        }
        history.push(mean);
    }
    Ok(TrainedRegressor {
        net,
        loss_history: history,
    })
}
