use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::grid::GridField;
use crate::neural::Mlp;

/// Quota representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Same quota for every state and time.
    Constant { u: Vec<f64> },
    /// Nodal values on a biomass grid, bilinearly interpolated (d = 2).
    Grid { field: GridField },
    /// Static network `B ↦ u`.
    Neural { net: Mlp },
    /// Derivative feedback `u(t+δt) = u(t) + ω(B(t) − B(t−δt))` started at `u0`.
    /// Stateful: simulated per path by the integrator.
    Feedback { omega: f64, u0: Vec<f64> },
}

/// A quota policy together with the admissible box `[lo, hi]`; every
/// evaluation is clamped into that box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaPolicy {
    pub lo: f64,
    pub hi: f64,
    pub kind: PolicyKind,
}

impl QuotaPolicy {
    pub fn constant(u: Vec<f64>, lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            kind: PolicyKind::Constant { u },
        }
    }

    pub fn grid(field: GridField, lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            kind: PolicyKind::Grid { field },
        }
    }

    pub fn neural(net: Mlp, lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            kind: PolicyKind::Neural { net },
        }
    }

    pub fn feedback(omega: f64, u0: Vec<f64>, lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            kind: PolicyKind::Feedback { omega, u0 },
        }
    }

    /// Number of quota components, when the representation fixes it.
    pub fn dim(&self) -> usize {
        match &self.kind {
            PolicyKind::Constant { u } => u.len(),
            PolicyKind::Grid { field } => field.components(),
            PolicyKind::Neural { net } => net.output_dim(),
            PolicyKind::Feedback { u0, .. } => u0.len(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.lo <= self.hi) {
            return Err(Error::InvalidArgument("policy box needs lo <= hi".into()));
        }
        check_dim("policy output", d, self.dim())?;
        match &self.kind {
            PolicyKind::Grid { .. } if d != 2 => Err(Error::Unsupported(
                "grid policies are defined for two species only".into(),
            )),
            PolicyKind::Neural { net } => check_dim("network input", d, net.input_dim()),
            _ => Ok(()),
        }
    }

    /// Quota at biomass `b` and time `t`, clamped into the box. For a
    /// feedback policy this is its starting value.
    pub fn eval(&self, b: &[f64], _t: f64) -> Vec<f64> {
        let raw = match &self.kind {
            PolicyKind::Constant { u } => u.clone(),
            PolicyKind::Grid { field } => field.interpolate(b),
            PolicyKind::Neural { net } => net.forward_unchecked(b),
            PolicyKind::Feedback { u0, .. } => u0.clone(),
        };
        raw.into_iter().map(|v| v.clamp(self.lo, self.hi)).collect()
    }

    pub fn is_stateful(&self) -> bool {
        matches!(self.kind, PolicyKind::Feedback { .. })
    }

    /// Jacobian `∂u_i/∂B_j` of the clamped policy. Rows are zero where the
    /// clamp is active.
    pub fn jacobian(&self, b: &[f64]) -> Result<Vec<Vec<f64>>> {
        match &self.kind {
            PolicyKind::Grid { field } => {
                let vals = field.interpolate(b);
                Ok(field
                    .gradient(b)
                    .into_iter()
                    .zip(vals)
                    .map(|(g, v)| {
                        if v < self.lo || v > self.hi {
                            vec![0.0, 0.0]
                        } else {
                            g.to_vec()
                        }
                    })
                    .collect())
            }
            PolicyKind::Neural { net } => {
                let cache = net.forward_cached(b);
                let mut scratch = vec![0.0; net.n_params()];
                Ok((0..net.output_dim())
                    .map(|i| {
                        let raw = cache.output[i];
                        if raw < self.lo || raw > self.hi {
                            return vec![0.0; b.len()];
                        }
                        let mut e = vec![0.0; net.output_dim()];
                        e[i] = 1.0;
                        net.backward(&cache, &e, &mut scratch)
                    })
                    .collect())
            }
            PolicyKind::Constant { .. } | PolicyKind::Feedback { .. } => Err(Error::Unsupported(
                "Itô quadratic variation needs a differentiable policy (grid or neural)".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    #[test]
    fn outputs_stay_in_box() {
        let p = QuotaPolicy::constant(vec![2.0, -1.0], 0.4, 1.4);
        assert_eq!(p.eval(&[1.0, 1.0], 0.0), vec![1.4, 0.4]);
        let g = Grid2D::new(0.0, 3.0, 10).unwrap();
        let f = GridField::from_fn(g, 2, |[x, y]| vec![x, -y]);
        let p = QuotaPolicy::grid(f, 0.4, 1.4);
        for b in [[0.0, 0.0], [3.0, 3.0], [1.0, 0.2]] {
            assert!(p.eval(&b, 0.0).iter().all(|v| (0.4..=1.4).contains(v)));
        }
    }

    #[test]
    fn constant_policy_has_no_ito_form() {
        let p = QuotaPolicy::constant(vec![1.0], 0.0, 2.0);
        assert!(matches!(p.jacobian(&[1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn neural_jacobian_matches_weights_for_linear_net() {
        let net = Mlp::from_parts(&[2, 1], vec![0.5, -0.25, 0.0], None).unwrap();
        let p = QuotaPolicy::neural(net, -10.0, 10.0);
        let j = p.jacobian(&[1.0, 2.0]).unwrap();
        assert_eq!(j, vec![vec![0.5, -0.25]]);
    }
}
