use std::collections::BTreeMap;
use std::fmt::Write as _;

use fishquota::calibrate::{
    calibrate_root, calibrate_samples, synthesize_observations, synthesize_samples,
    write_observations, CoefficientVector,
};
use fishquota::grid::GridField;
use fishquota::io::{grid_field_dump, spatial_field_dump, trajectory_csv};
use fishquota::kfp::optimize_quota;
use fishquota::neural::{train_policy, write_weights};
use fishquota::sde::{
    estimate_cost, estimate_cost_with, simulate_paths, PolicyKind, QuotaPolicy, Trajectory,
};
use fishquota::spatial::run_spatial;
use fishquota::{feedback, Result};
use serde_json::json;

use crate::config::{
    CalibrateConfig, CalibrateMethod, FeedbackConfig, KfpConfig, PolicyConfig, Scenario,
    SimulateConfig,
};

/// Output files keyed by path relative to the output directory.
pub type Outputs = BTreeMap<String, Vec<u8>>;

/// Offset of the evaluation stream from the training stream.
const EVAL_STREAM: u64 = 1_000_003;

fn put(out: &mut Outputs, path: impl Into<String>, text: String) {
    out.insert(path.into(), text.into_bytes());
}

fn put_json(out: &mut Outputs, path: &str, value: serde_json::Value) {
    let mut text = serde_json::to_string_pretty(&value).expect("summary values serialise");
    text.push('\n');
    put(out, path, text);
}

fn write_paths(out: &mut Outputs, dir: &str, paths: &[Trajectory], n: usize) {
    for (k, p) in paths.iter().take(n).enumerate() {
        put(out, format!("{dir}/path_{k:04}.csv"), trajectory_csv(p));
    }
}

/// Run a validated scenario. The top-level seed replaces any nested seed.
pub fn run(scenario: &Scenario, seed: u64) -> Result<Outputs> {
    let mut out = Outputs::new();
    match scenario {
        Scenario::Simulate(c) => simulate(c, seed, &mut out)?,
        Scenario::Calibrate(c) => calibrate(c, seed, &mut out)?,
        Scenario::Kfp(c) => kfp(c, &mut out)?,
        Scenario::Policy(c) => policy(c, seed, &mut out)?,
        Scenario::Feedback(c) => feedback_run(c, seed, &mut out)?,
        Scenario::Spatial(c) => {
            let cfg = fishquota::spatial::SpatialConfig { seed, ..c.clone() };
            let res = run_spatial(&cfg)?;
            put(&mut out, "totals.csv", res.totals_csv());
            put(&mut out, "fleet.csv", res.fleet_csv());
            put(&mut out, "psi.dat", spatial_field_dump(&res.mesh, &res.psi));
            for s in &res.snapshots {
                put(
                    &mut out,
                    format!("snapshots/B_t{:.2}.dat", s.t),
                    spatial_field_dump(&res.mesh, &s.b),
                );
                put(
                    &mut out,
                    format!("snapshots/P_t{:.2}.dat", s.t),
                    spatial_field_dump(&res.mesh, &s.p),
                );
            }
            let last = res.totals.last().expect("at least one step");
            put_json(
                &mut out,
                "summary.json",
                json!({
                    "substeps": res.substeps,
                    "steps": res.totals.len() - 1,
                    "max_budget_residual": res.max_budget_residual(),
                    "final_int_b": last.int_b,
                    "final_quota": last.q,
                    "final_fishing": last.n_fishing,
                    "final_docked": last.n_docked,
                }),
            );
        }
    }
    Ok(out)
}

fn simulate(c: &SimulateConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let paths = simulate_paths(&c.model, &c.policy, c.dt, c.n_paths, seed)?;
    let cost = estimate_cost_with(&c.model, &c.policy, c.dt, c.n_paths, seed, c.qv)?;
    write_paths(out, "paths", &paths, c.write_paths);
    let d = c.model.dim();
    let mean_final: Vec<f64> = (0..d)
        .map(|i| paths.iter().map(|p| p.final_state().b[i]).sum::<f64>() / paths.len() as f64)
        .collect();
    put_json(
        out,
        "summary.json",
        json!({ "cost_mean": cost.mean, "cost_std_err": cost.std_err, "n_paths": cost.n_paths, "mean_final_biomass": mean_final }),
    );
    Ok(())
}

fn calibration_csv(
    truth: &CoefficientVector,
    estimate: &CoefficientVector,
    dispersion: [f64; 4],
) -> String {
    let mut s = String::from("coefficient,truth,estimate,dispersion\n");
    let (t, e) = (truth.to_array(), estimate.to_array());
    for (i, name) in ["r", "kappa", "a", "c"].iter().enumerate() {
        writeln!(s, "{name},{},{},{}", t[i], e[i], dispersion[i]).expect("infallible");
    }
    s
}

fn calibrate(c: &CalibrateConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    match &c.method {
        CalibrateMethod::Root { start, options } => {
            let obs = synthesize_observations(&c.truth, &c.setup, c.sigma, seed)?;
            let res = calibrate_root(&obs, start, &c.setup, options)?;
            put(out, "observations.csv", write_observations(&[obs]));
            put(
                out,
                "calibration.csv",
                calibration_csv(&c.truth, &res.z, [0.0; 4]),
            );
            put_json(
                out,
                "summary.json",
                json!({ "residual": res.residual, "iterations": res.iterations, "converged": res.converged }),
            );
        }
        method => {
            let mut method = method.sample_method().expect("sample method");
            if let fishquota::calibrate::CalibrationMethod::Regressor(rc) = &mut method {
                rc.train.seed = seed.wrapping_add(EVAL_STREAM);
            }
            let samples = synthesize_samples(&c.truth, &c.setup, c.sigma, c.samples, seed)?;
            let res = calibrate_samples(&samples, &c.setup, &method)?;
            put(out, "observations.csv", write_observations(&samples));
            put(
                out,
                "calibration.csv",
                calibration_csv(&c.truth, &res.z_hat, res.dispersion),
            );
            if !res.loss_history.is_empty() {
                put(out, "loss_history.csv", loss_csv(&res.loss_history));
            }
            put_json(
                out,
                "summary.json",
                json!({ "samples": samples.len(), "converged": res.converged }),
            );
        }
    }
    Ok(())
}

fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (k, l) in history.iter().enumerate() {
        writeln!(s, "{k},{l}").expect("infallible");
    }
    s
}

fn kfp(c: &KfpConfig, out: &mut Outputs) -> Result<()> {
    let u0 = GridField::constant(c.grid, &c.u0);
    let res = optimize_quota(&c.grid, &c.model, &u0, &c.options)?;
    for i in 0..res.u.components() {
        put(out, format!("u{}.dat", i + 1), grid_field_dump(&res.u, i));
    }
    put(out, "J_history.csv", res.history_csv());
    put_json(
        out,
        "summary.json",
        json!({
            "j_initial": res.history[0].j,
            "j_final": res.final_j(),
            "iterations": res.history.len() - 1,
            "converged": res.converged,
            "stagnated": res.stagnated,
        }),
    );
    Ok(())
}

fn policy(c: &PolicyConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let mut train = c.train.clone();
    train.train.seed = seed;
    let trained = train_policy(&c.model, &train)?;
    let PolicyKind::Neural { net } = &trained.policy.kind else {
        unreachable!("the trainer returns a neural policy")
    };
    put(out, "weights.txt", write_weights(net));
    put(out, "loss_history.csv", loss_csv(&trained.loss_history));
    let u = GridField::from_fn(c.grid, 2, |b| trained.policy.eval(&b, 0.0));
    put(out, "u1.dat", grid_field_dump(&u, 0));
    put(out, "u2.dat", grid_field_dump(&u, 1));
    let (m, eval_seed) = (&c.model, seed.wrapping_add(EVAL_STREAM));
    let d = m.dim();
    let mut costs = serde_json::Map::new();
    for (name, p) in [
        ("neural", trained.policy.clone()),
        (
            "u_min",
            QuotaPolicy::constant(vec![m.u_min; d], m.u_min, m.u_max),
        ),
        (
            "u_max",
            QuotaPolicy::constant(vec![m.u_max; d], m.u_min, m.u_max),
        ),
    ] {
        let e = estimate_cost(m, &p, train.dt, c.eval_paths, eval_seed)?;
        costs.insert(name.into(), json!({ "mean": e.mean, "std_err": e.std_err }));
    }
    put_json(
        out,
        "summary.json",
        json!({ "final_loss": trained.loss_history.last(), "eval_paths": c.eval_paths, "cost": costs }),
    );
    Ok(())
}

fn time_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Closed loop against the shared-noise run held at `u ≡ u_min`.
fn feedback_run(c: &FeedbackConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let m = &c.model;
    let d = m.dim();
    let closed = feedback::run_feedback(m, c.omega, c.u0.clone(), c.dt, c.n_paths, seed)?;
    let open = simulate_paths(
        m,
        &QuotaPolicy::constant(vec![m.u_min; d], m.u_min, m.u_max),
        c.dt,
        c.n_paths,
        seed,
    )?;
    write_paths(out, "closed_loop", &closed, c.write_paths);
    write_paths(out, "open_loop", &open, c.write_paths);
    let from = closed[0]
        .times
        .iter()
        .position(|&t| t >= c.window_start - 1e-12)
        .unwrap_or(0);
    let calmer: Vec<f64> = (0..d)
        .map(|i| {
            let wins = closed
                .iter()
                .zip(&open)
                .filter(|(a, b)| time_std(&a.biomass(i)[from..]) < time_std(&b.biomass(i)[from..]))
                .count();
            wins as f64 / c.n_paths as f64
        })
        .collect();
    let drift: Vec<f64> = (0..d)
        .map(|i| {
            median(
                closed
                    .iter()
                    .map(|p| p.final_state().b[i] - p.states[0].b[i])
                    .collect(),
            )
        })
        .collect();
    let us = closed
        .iter()
        .flat_map(|p| p.controls.iter().flatten().copied());
    let (lo, hi) = us.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| {
        (lo.min(u), hi.max(u))
    });
    put_json(
        out,
        "summary.json",
        json!({
            "fraction_calmer_than_u_min": calmer,
            "median_biomass_drift": drift,
            "u_observed_min": lo,
            "u_observed_max": hi,
        }),
    );
    Ok(())
}
