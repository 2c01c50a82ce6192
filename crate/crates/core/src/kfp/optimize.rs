use serde::{Deserialize, Serialize};

use super::solver::{
    objective_gradient, project_box, solve_adjoint_with, solve_forward_with, KfpScheme,
};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridField};
use crate::sde::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub dt: f64,
    pub max_iter: usize,
    /// Stop when the L² norm of the projected-gradient step falls below.
    pub tol: f64,
    /// Largest control change of the first trial step.
    pub initial_step: f64,
    /// Smallest control change tried before declaring stagnation.
    pub min_step: f64,
    /// Sufficient-decrease constant of the backtracking search.
    pub armijo: f64,
    pub scheme: KfpScheme,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            max_iter: 30,
            tol: 1e-6,
            initial_step: 0.25,
            min_step: 1e-6,
            armijo: 1e-4,
            scheme: KfpScheme::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    /// Largest nodal change made by the accepted step.
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotaOptimization {
    pub u: GridField,
    pub history: Vec<IterationRecord>,
    /// Projected gradient fell below tolerance.
    pub converged: bool,
    /// Line search found no decrease above the minimum step.
    pub stagnated: bool,
}

impl QuotaOptimization {
    pub fn final_j(&self) -> f64 {
        self.history
            .last()
            .expect("history holds the initial point")
            .j
    }

    /// History as CSV `iter,J,step,grad_norm`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,J,step,grad_norm\n");
        for r in &self.history {
            s.push_str(&format!("{},{},{},{}\n", r.iter, r.j, r.step, r.grad_norm));
        }
        s
    }
}

fn evaluate(
    grid: &Grid2D,
    params: &ModelParams,
    u: &GridField,
    opts: &OptimizeOptions,
) -> Result<f64> {
    Ok(solve_forward_with(grid, params, u, opts.dt, opts.scheme)?.1)
}

/// Projected gradient descent on the nodal quota with backtracking.
///
/// The search direction is the gradient divided by the cell area (the L²
/// representative). Steps are accepted only on sufficient decrease, so the
/// recorded objective never increases.
pub fn optimize_quota(
    grid: &Grid2D,
    params: &ModelParams,
    u0: &GridField,
    opts: &OptimizeOptions,
) -> Result<QuotaOptimization> {
    if !(opts.initial_step > 0.0 && opts.min_step > 0.0 && opts.tol >= 0.0) {
        return Err(Error::InvalidArgument(
            "optimizer steps must be positive and tol non-negative".into(),
        ));
    }
    let (lo, hi) = (params.u_min, params.u_max);
    let area = grid.cell_area();
    let mut u = project_box(u0, lo, hi);
    let (mut rho, mut j) = solve_forward_with(grid, params, &u, opts.dt, opts.scheme)?;
    let mut history = vec![];
    let mut scale = opts.initial_step;
    let mut converged = false;
    let mut stagnated = false;

    for iter in 0..=opts.max_iter {
        let adj = solve_adjoint_with(grid, params, &u, opts.dt, opts.scheme)?;
        let mut g = objective_gradient(grid, params, &u, &rho, &adj)?;
        g.values.iter_mut().flatten().for_each(|x| *x /= area);
        let pg = project_box(&u.axpy(-1.0, &g), lo, hi);
        let grad_norm = (area
            * pg.values
                .iter()
                .zip(&u.values)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)))
                .sum::<f64>())
        .sqrt();
        if iter == 0 {
            history.push(IterationRecord {
                iter: 0,
                j,
                step: 0.0,
                grad_norm,
            });
        } else {
            history.last_mut().expect("pushed above").grad_norm = grad_norm;
        }
        if grad_norm < opts.tol {
            converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        let gmax = g
            .values
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()));
        let mut accepted = None;
        while scale >= opts.min_step {
            let trial = project_box(&u.axpy(-scale / gmax, &g), lo, hi);
            let decrease: f64 = area
                * g.values
                    .iter()
                    .zip(u.values.iter().zip(&trial.values))
                    .flat_map(|(gv, (a, b))| {
                        gv.iter()
                            .zip(a.iter().zip(b))
                            .map(|(x, (p, q))| x * (p - q))
                    })
                    .sum::<f64>();
            let jt = evaluate(grid, params, &trial, opts)?;
            if jt <= j - opts.armijo * decrease && jt < j {
                accepted = Some((trial, jt));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, jt)) = accepted else {
            stagnated = true;
            break;
        };
        let step = trial.max_abs_diff(&u);
        u = trial;
        let (r, jj) = solve_forward_with(grid, params, &u, opts.dt, opts.scheme)?;
        rho = r;
        j = jj;
        debug_assert!((jj - jt).abs() <= 1e-12 * jt.abs().max(1.0));
        history.push(IterationRecord {
            iter: iter + 1,
            j,
            step,
            grad_norm: f64::NAN,
        });
        scale = (scale * 2.0).min(4.0 * opts.initial_step);
    }
    if let Some(last) = history.last_mut() {
        if last.grad_norm.is_nan() {
            last.grad_norm = 0.0;
        }
    }
    Ok(QuotaOptimization {
        u,
        history,
        converged,
        stagnated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterates_stay_feasible_and_j_never_rises() {
        let g = Grid2D::new(0.0, 3.0, 24).unwrap();
        let p = ModelParams::two_species();
        let opts = OptimizeOptions {
            dt: 0.005,
            max_iter: 4,
            ..Default::default()
        };
        let res = optimize_quota(&g, &p, &GridField::constant(g, &[0.9, 0.9]), &opts).unwrap();
        assert!(res.history.windows(2).all(|w| w[1].j <= w[0].j));
        assert!(res
            .u
            .values
            .iter()
            .flatten()
            .all(|v| (p.u_min..=p.u_max).contains(v)));
        assert!(res.final_j() < res.history[0].j);
    }

    #[test]
    fn stationary_start_stops_at_once() {
        // Without tracking, reward or noise the objective ignores the quota.
        let g = Grid2D::new(0.0, 3.0, 16).unwrap();
        let mut p = ModelParams::two_species().with_noise(0.0);
        p.sigma_init = 0.2;
        p.tracking_weight = 0.0;
        p.alpha = vec![0.0, 0.0];
        let opts = OptimizeOptions {
            dt: 0.01,
            ..Default::default()
        };
        let res = optimize_quota(&g, &p, &GridField::constant(g, &[0.9, 0.9]), &opts).unwrap();
        assert!(
            res.history.len() <= 3,
            "{} iterations",
            res.history.len() - 1
        );
        assert!(res.converged);
    }
}
