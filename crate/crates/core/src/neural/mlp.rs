use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Fully connected network: rectifier on hidden layers, identity output,
/// optional hard clamp applied last.
///
/// All weights and biases live in one flat vector so optimizers and
/// finite-difference checks can treat the network as a point in R^p.
/// Layer `k` occupies `W_k` (row-major, `out × in`) followed by `b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    clamp: Option<(f64, f64)>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values of every layer.
    pre: Vec<Vec<f64>>,
    /// Output after clamping.
    pub output: Vec<f64>,
}

impl Mlp {
    /// Zero network with the given layer sizes (`[input, hidden.., output]`).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network needs at least an input and an output layer of positive width, got {sizes:?}"
            )));
        }
        let n = Self::count_params(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
            clamp: None,
        })
    }

    /// He-initialised weights, zero biases.
    pub fn random(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut r = rng::substream(seed, 0x6d6c70);
        for k in 0..net.n_layers() {
            let (w, _) = net.layer_ranges(k);
            let scale = (2.0 / sizes[k] as f64).sqrt();
            for p in &mut net.params[w] {
                *p = scale * rng::normal(&mut r);
            }
        }
        Ok(net)
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }

    pub fn from_parts(
        sizes: &[usize],
        params: Vec<f64>,
        clamp: Option<(f64, f64)>,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        check_dim("network parameters", net.params.len(), params.len())?;
        net.params = params;
        net.clamp = clamp;
        Ok(net)
    }

    fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn clamp(&self) -> Option<(f64, f64)> {
        self.clamp
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter ranges (weights, bias) of layer `k`.
    pub fn layer_ranges(&self, k: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(k) {
            off += w[0] * w[1] + w[1];
        }
        let (nin, nout) = (self.sizes[k], self.sizes[k + 1]);
        (
            off..off + nin * nout,
            off + nin * nout..off + nin * nout + nout,
        )
    }

    /// Set the output-layer bias, e.g. to start a policy in the middle of its box.
    pub fn set_output_bias(&mut self, value: f64) {
        let (_, b) = self.layer_ranges(self.n_layers() - 1);
        self.params[b].iter_mut().for_each(|p| *p = value);
    }

    /// Forward pass.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.n_layers() - 1;
        for k in 0..=last {
            let mut z = self.affine(k, &cur);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = z;
        }
        if let Some((lo, hi)) = self.clamp {
            cur.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
        cur
    }

    fn affine(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let (wr, br) = self.layer_ranges(k);
        let nin = self.sizes[k];
        let w = &self.params[wr];
        let b = &self.params[br];
        b.iter()
            .enumerate()
            .map(|(o, bo)| {
                let row = &w[o * nin..(o + 1) * nin];
                bo + row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>()
            })
            .collect()
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let last = self.n_layers() - 1;
        let mut inputs = Vec::with_capacity(last + 1);
        let mut pre = Vec::with_capacity(last + 1);
        let mut cur = x.to_vec();
        for k in 0..=last {
            let z = self.affine(k, &cur);
            inputs.push(cur);
            cur = if k < last {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        if let Some((lo, hi)) = self.clamp {
            cur.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
        ForwardCache {
            inputs,
            pre,
            output: cur,
        }
    }

    /// Reverse-mode pass: accumulates `∂L/∂θ` into `grad` given `∂L/∂y`
    /// at the (clamped) output and returns `∂L/∂x`.
    ///
    /// The clamp passes gradients through where the raw output lies inside
    /// the box and blocks them outside. Rectifier kinks take subgradient 0.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let last = self.n_layers() - 1;
        let mut delta: Vec<f64> = grad_out.to_vec();
        if let Some((lo, hi)) = self.clamp {
            for (d, z) in delta.iter_mut().zip(&cache.pre[last]) {
                if *z < lo || *z > hi {
                    *d = 0.0;
                }
            }
        }
        for k in (0..=last).rev() {
            if k < last {
                for (d, z) in delta.iter_mut().zip(&cache.pre[k]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (wr, br) = self.layer_ranges(k);
            let nin = self.sizes[k];
            let x = &cache.inputs[k];
            {
                let gw = &mut grad[wr.clone()];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (g, xi) in gw[o * nin..(o + 1) * nin].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            for (g, d) in grad[br].iter_mut().zip(&delta) {
                *g += d;
            }
            let w = &self.params[wr];
            let mut next = vec![0.0; nin];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (n, wi) in next.iter_mut().zip(&w[o * nin..(o + 1) * nin]) {
                    *n += d * wi;
                }
            }
            delta = next;
        }
        delta
    }

    /// Jacobian `∂y_i/∂x_j` of the (clamped) output at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let cache = self.forward_cached(x);
        let mut scratch = vec![0.0; self.n_params()];
        (0..self.output_dim())
            .map(|i| {
                let mut e = vec![0.0; self.output_dim()];
                e[i] = 1.0;
                self.backward(&cache, &e, &mut scratch)
            })
            .collect()
    }

    /// Perturb all parameters in place by `N(0, std²)`; used by tests and
    /// by random restarts.
    pub fn jitter<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        for p in &mut self.params {
            *p += std * rng::normal(rng);
        }
    }
}

/// Summed squared-error loss `Σ_s |net(x_s) − t_s|²` over a batch and its
/// exact parameter gradient.
///
/// The loss is a sum, not a mean: callers divide by the batch size.
pub fn mlp_gradient(
    net: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_dim("batch targets", inputs.len(), targets.len())?;
    let mut grad = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        check_dim("network input", net.input_dim(), x.len())?;
        check_dim("network target", net.output_dim(), t.len())?;
        let cache = net.forward_cached(x);
        let resid: Vec<f64> = cache.output.iter().zip(t).map(|(y, t)| y - t).collect();
        loss += resid.iter().map(|r| r * r).sum::<f64>();
        let g: Vec<f64> = resid.iter().map(|r| 2.0 * r).collect();
        net.backward(&cache, &g, &mut grad);
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.eval(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_identity_layer() {
        let mut p = vec![0.0; 6];
        p[0] = 1.0;
        p[3] = 1.0;
        let net = Mlp::from_parts(&[2, 2], p, None).unwrap();
        assert_eq!(net.eval(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn clamp_is_applied_last() {
        let net = Mlp::from_parts(&[1, 1], vec![1.0, 0.0], Some((0.4, 1.4))).unwrap();
        assert_eq!(net.eval(&[2.0]).unwrap(), vec![1.4]);
        assert_eq!(net.eval(&[0.0]).unwrap(), vec![0.4]);
        assert_eq!(net.eval(&[0.7]).unwrap(), vec![0.7]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Mlp::zeros(&[2, 4, 1]).unwrap();
        assert!(matches!(net.eval(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_loss_batch_has_zero_gradient() {
        let net = Mlp::random(&[2, 4, 2], 3).unwrap();
        let xs = vec![vec![0.2, 0.9], vec![-0.4, 0.1]];
        let ts: Vec<Vec<f64>> = xs.iter().map(|x| net.eval(x).unwrap()).collect();
        let (loss, g) = mlp_gradient(&net, &xs, &ts).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let net = Mlp::random(&[2, 4, 2], 5).unwrap();
        let x = vec![0.3, -0.8];
        let t = vec![1.0, 0.5];
        let (l1, g1) =
            mlp_gradient(&net, std::slice::from_ref(&x), std::slice::from_ref(&t)).unwrap();
        let (l2, g2) = mlp_gradient(&net, &[x.clone(), x], &[t.clone(), t]).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
