//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

use std::time::{Duration, Instant};

use fishquota::calibrate::{
    calibrate_root, calibrate_samples, synthesize_observations, synthesize_samples,
    CalibrationMethod, CalibrationSetup, CoefficientVector, RegressorConfig, RootOptions,
};
use fishquota::feedback::run_feedback;
use fishquota::grid::{Grid2D, GridField};
use fishquota::kfp::{
    objective_gradient, optimize_quota, solve_adjoint, solve_forward, solve_forward_with,
    stable_dt, Boundary, KfpScheme, OptimizeOptions,
};
use fishquota::neural::{train_policy, PolicyTrainConfig};
use fishquota::rng;
use fishquota::sde::{
    estimate_cost, estimate_cost_with, simulate_paths, ModelParams, QuotaPolicy, QvMode, Trajectory,
};
use fishquota::spatial::{
    current_velocity, run_spatial, solve_stream_potential, step_plankton, Field, Mesh, MeshConfig,
    PlanktonBoundary, PlanktonCoefficients, QuotaMode, SpatialConfig, SpatialRun, VelocityField,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit: Duration, t: Instant) -> bool {
    t.elapsed() <= limit
}

fn table1_truth() -> CoefficientVector {
    CoefficientVector::new(2.0, 1.0, 1.1, 1.0)
}

fn c1_noiseless_round_trip() -> Outcome {
    let t = Instant::now();
    let setup = CalibrationSetup::reference();
    let obs = synthesize_observations(&table1_truth(), &setup, 0.0, 0).unwrap();
    let res = calibrate_root(
        &obs,
        &table1_truth().scaled(1.5),
        &setup,
        &RootOptions::default(),
    )
    .unwrap();
    let err = res
        .z
        .to_array()
        .iter()
        .zip(table1_truth().to_array())
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        err < 1e-6 && within(Duration::from_secs(5), t),
        format!("max relative error {err:.1e}"),
    )
}

fn c2_noisy_regressor() -> Outcome {
    let t = Instant::now();
    let setup = CalibrationSetup::reference();
    // reported mean and standard deviation per coefficient, order [r, κ, a, c]
    let rows: [(f64, [(f64, f64); 4]); 2] = [
        (
            0.01,
            [(1.99, 0.09), (1.01, 0.30), (1.09, 0.04), (0.97, 0.06)],
        ),
        (
            0.25,
            [(1.97, 0.16), (1.03, 0.34), (1.15, 0.15), (0.90, 0.23)],
        ),
    ];
    let mut pass = true;
    let mut detail = vec![];
    for (sigma, reported) in rows {
        let samples = synthesize_samples(&table1_truth(), &setup, sigma, 1000, 7).unwrap();
        let cfg = RegressorConfig {
            training_sigma: sigma,
            ..Default::default()
        };
        let res = calibrate_samples(&samples, &setup, &CalibrationMethod::Regressor(cfg)).unwrap();
        let z = res.z_hat.to_array();
        let ok = z
            .iter()
            .zip(reported)
            .all(|(v, (m, s))| (v - m).abs() <= 3.0 * s);
        pass &= ok;
        detail.push(format!(
            "σ={sigma}: [{:.3}, {:.3}, {:.3}, {:.3}]",
            z[0], z[1], z[2], z[3]
        ));
    }
    outcome(
        pass && within(Duration::from_secs(600), t),
        detail.join("; "),
    )
}

fn c3_adjoint_gradient() -> Outcome {
    let t = Instant::now();
    let p = ModelParams::two_species();
    let g = Grid2D::new(0.0, 3.0, 60).unwrap();
    let u = GridField::from_fn(g, 2, |[x, y]| {
        vec![0.9 + 0.2 * (x - y).sin(), 0.7 + 0.1 * x * y / 9.0]
    });
    let dt = 2e-3;
    let (rho, _) = solve_forward(&g, &p, &u, dt).unwrap();
    let adj = solve_adjoint(&g, &p, &u, dt).unwrap();
    let grad = objective_gradient(&g, &p, &u, &rho, &adj).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let mut r = rng::substream(2024, k);
        let mut dir = GridField::constant(g, &[0.0, 0.0]);
        dir.values
            .iter_mut()
            .flatten()
            .for_each(|v| *v = rng::normal(&mut r));
        let eps = 1e-4;
        let (_, jp) = solve_forward(&g, &p, &u.axpy(eps, &dir), dt).unwrap();
        let (_, jm) = solve_forward(&g, &p, &u.axpy(-eps, &dir), dt).unwrap();
        let fd = (jp - jm) / (2.0 * eps);
        worst = worst.max((grad.dot(&dir) - fd).abs() / fd.abs());
    }
    outcome(
        worst <= 1e-3 && within(Duration::from_secs(300), t),
        format!("worst relative mismatch {worst:.1e} over 5 directions"),
    )
}

fn c4_kfp_improvement() -> Outcome {
    let t = Instant::now();
    let p = ModelParams::two_species();
    let g = Grid2D::new(0.0, 3.0, 100).unwrap();
    let opts = OptimizeOptions {
        dt: 1e-3,
        ..Default::default()
    };
    let res = optimize_quota(&g, &p, &GridField::constant(g, &[0.9, 0.9]), &opts).unwrap();
    let j: Vec<f64> = res.history.iter().map(|h| h.j).collect();
    let monotone = j.windows(2).all(|w| w[1] <= w[0]);
    let gain = j[0] - res.final_j();
    outcome(
        gain >= 0.05 && monotone && within(Duration::from_secs(1800), t),
        format!(
            "J {:.4} -> {:.4} (improvement {gain:.4}), monotone {monotone}, {} iterations",
            j[0],
            res.final_j(),
            j.len() - 1
        ),
    )
}

fn c5_pde_vs_monte_carlo() -> Outcome {
    let p = ModelParams::two_species();
    let g = Grid2D::new(0.0, 3.0, 400).unwrap();
    let u = GridField::from_fn(g, 2, |[x, y]| {
        vec![
            (0.6 + 0.3 * x - 0.1 * y).clamp(0.4, 1.4),
            (0.8 + 0.2 * (x * y).sin()).clamp(0.4, 1.4),
        ]
    });
    let (_, j_pde) = solve_forward(
        &g,
        &p,
        &u,
        stable_dt(&g, &p, &u, KfpScheme::default()).unwrap(),
    )
    .unwrap();
    let mc = estimate_cost_with(
        &p,
        &QuotaPolicy::grid(u, p.u_min, p.u_max),
        0.002,
        100_000,
        1,
        QvMode::Ito,
    )
    .unwrap();
    let tol = (3.0 * mc.std_err).max(0.02 * mc.mean.abs());
    outcome(
        (j_pde - mc.mean).abs() <= tol,
        format!(
            "PDE {j_pde:.5} vs Monte Carlo {:.5} ± {:.5} (tolerance {tol:.5})",
            mc.mean, mc.std_err
        ),
    )
}

fn c6_neural_policy() -> Outcome {
    let t = Instant::now();
    let p = ModelParams::two_species();
    let cfg = PolicyTrainConfig::default();
    let trained = train_policy(&p, &cfg).unwrap();
    let eval = |pol: &QuotaPolicy| estimate_cost(&p, pol, cfg.dt, 10_000, 1_000_003).unwrap();
    let nn = eval(&trained.policy);
    let lo = eval(&QuotaPolicy::constant(vec![p.u_min; 2], p.u_min, p.u_max));
    let hi = eval(&QuotaPolicy::constant(vec![p.u_max; 2], p.u_min, p.u_max));
    let last = *trained.loss_history.last().unwrap();
    outcome(
        nn.mean < lo.mean
            && nn.mean < hi.mean
            && (-0.35..=0.05).contains(&last)
            && within(Duration::from_secs(1200), t),
        format!(
            "J neural {:.4}, u_min {:.4}, u_max {:.4}; final loss {last:.4}",
            nn.mean, lo.mean, hi.mean
        ),
    )
}

fn time_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn calmer_counts(closed: &[Trajectory], open: &[Trajectory], from: usize) -> [usize; 2] {
    std::array::from_fn(|i| {
        closed
            .iter()
            .zip(open)
            .filter(|(a, b)| time_std(&a.biomass(i)[from..]) < time_std(&b.biomass(i)[from..]))
            .count()
    })
}

fn c7_feedback() -> (Outcome, String) {
    let p = ModelParams::two_species();
    let dt = 0.01;
    let closed = run_feedback(&p, 100.0, None, dt, 100, 0).unwrap();
    let in_box = closed
        .iter()
        .all(|t| t.controls.iter().flatten().all(|u| (0.4..=1.4).contains(u)));
    let floor = simulate_paths(
        &p,
        &QuotaPolicy::constant(vec![p.u_min; 2], p.u_min, p.u_max),
        dt,
        100,
        0,
    )
    .unwrap();
    let wins = calmer_counts(&closed, &floor, (0.5 / dt).round() as usize);
    let u0 = 0.5 * (p.u_min + p.u_max);
    let held = simulate_paths(
        &p,
        &QuotaPolicy::constant(vec![u0; 2], p.u_min, p.u_max),
        dt,
        100,
        0,
    )
    .unwrap();
    let alt = calmer_counts(&closed, &held, 0);
    (
        outcome(
            wins.iter().all(|w| *w >= 90) && in_box,
            format!("calmer than u ≡ u_min over [0.5, 2] on {}/100 and {}/100 paths; quota in box {in_box}", wins[0], wins[1]),
        ),
        format!("against u ≡ {u0:.2} over the whole path: calmer on {}/100 and {}/100 paths", alt[0], alt[1]),
    )
}

fn plankton(mu: f64) -> PlanktonCoefficients {
    PlanktonCoefficients {
        b: 1.0,
        mu,
        boundary: PlanktonBoundary::Neumann,
    }
}

fn below_bound(m: &Mesh, p: &Field, b: &Field) -> bool {
    (0..m.len())
        .filter(|&k| m.sea[k])
        .all(|k| p.values[k] >= 0.0 && p.values[k] <= 1.0 - b.values[k] + 1e-12)
}

fn c8_plankton() -> Outcome {
    let m = Mesh::from_config(&MeshConfig {
        cells: 20,
        ..Default::default()
    })
    .unwrap();
    let c = 0.7;
    let b = Field::from_fn(&m, |_| 1.0 - c);
    let mut p = Field::from_fn(&m, |_| 0.5 * c);
    let still = VelocityField::zero(&m);
    for _ in 0..2000 {
        p = step_plankton(&m, &p, &b, &still, &plankton(0.0), 1e-3).unwrap();
    }
    let exact = c * (2.0 * c).exp() / (1.0 + (2.0 * c).exp());
    let err = (0..m.len())
        .filter(|&k| m.sea[k])
        .map(|k| (p.values[k] - exact).abs())
        .fold(0.0, f64::max);

    let shape = |[x, y]: [f64; 2]| 0.5 + 0.5 * (x * y).sin();
    let b = Field::from_fn(&m, |z| 0.2 + 0.6 * shape(z));
    let mut p = Field::from_fn(&m, |z| (0.8 - 0.6 * shape(z)) * 0.9);
    let mut bound = below_bound(&m, &p, &b);
    for _ in 0..200 {
        p = step_plankton(&m, &p, &b, &still, &plankton(0.0), 0.01).unwrap();
        bound &= below_bound(&m, &p, &b);
    }
    let b = Field::from_fn(&m, |_| 0.4);
    let mut p = Field::from_fn(&m, |[x, y]| 0.6 * (0.5 + 0.5 * (x - y).sin()));
    let stream = solve_stream_potential(&m, |x| x - 6.0, |_| 0.0).unwrap();
    for n in 0..500 {
        let v = current_velocity(
            &m,
            &stream,
            n as f64 * 0.004,
            10.0,
            2.0 * std::f64::consts::PI,
        );
        p = step_plankton(&m, &p, &b, &v, &plankton(0.1), 0.004).unwrap();
        bound &= below_bound(&m, &p, &b);
    }
    outcome(
        err <= 1e-3 && bound,
        format!("closed-form error {err:.1e} at t = 2; bound held at every step {bound}"),
    )
}

fn spatial_run(mode: QuotaMode, seed: u64) -> SpatialRun {
    let mut cfg = SpatialConfig {
        mode,
        seed,
        ..Default::default()
    };
    cfg.snapshot_times = (0..=100).map(|k| k as f64 * cfg.params.dt).collect();
    run_spatial(&cfg).unwrap()
}

fn all_docked_at_end(run: &SpatialRun) -> bool {
    let steps = run.totals.len() - 1;
    let boats = run.fleet_log[0].boats.len();
    run.totals[steps - steps / 10..]
        .iter()
        .all(|r| r.n_docked == boats)
}

fn c9_spatial(
    no_quota: &SpatialRun,
    with_quota: &SpatialRun,
    times: [Duration; 2],
) -> (Outcome, String) {
    let docked = all_docked_at_end(no_quota);
    let i0 = with_quota
        .totals
        .iter()
        .position(|r| r.t >= 0.5 - 1e-9)
        .unwrap();
    let base = with_quota.totals[i0].int_b;
    let drift = with_quota.totals[i0..]
        .iter()
        .map(|r| (r.int_b / base - 1.0).abs())
        .fold(0.0, f64::max);
    let fast = times.iter().all(|t| *t <= Duration::from_secs(600));
    let seeds = (1..20)
        .filter(|&s| all_docked_at_end(&spatial_run(QuotaMode::NoQuota, s)))
        .count()
        + usize::from(docked);
    (
        outcome(
            docked && drift <= 0.15 && fast,
            format!("no_quota all docked over the final 10%: {docked}; with_quota max deviation from t = 0.5 is {:.1}%", 100.0 * drift),
        ),
        format!("no_quota docking holds for {seeds}/20 seeds"),
    )
}

fn c10_conservation(runs: [&SpatialRun; 2]) -> Outcome {
    let p = ModelParams::two_species();
    let g = Grid2D::new(0.0, 3.0, 100).unwrap();
    let u = GridField::constant(g, &[0.9, 0.9]);
    let (mut mass_residual, mut rho_min) = (0.0_f64, f64::INFINITY);
    for boundary in [Boundary::NoFlux, Boundary::Outflow] {
        let scheme = KfpScheme {
            boundary,
            ..Default::default()
        };
        let (rho, _) =
            solve_forward_with(&g, &p, &u, stable_dt(&g, &p, &u, scheme).unwrap(), scheme).unwrap();
        for (m, out) in rho.mass.iter().zip(&rho.outflow) {
            mass_residual = mass_residual.max((1.0 - m - out).abs());
        }
        for (_, s) in &rho.checkpoints {
            rho_min = s.iter().copied().fold(rho_min, f64::min);
        }
    }
    let budget = runs
        .iter()
        .map(|r| r.max_budget_residual())
        .fold(0.0, f64::max);
    let b_min = runs
        .iter()
        .flat_map(|r| r.snapshots.iter().map(|s| s.b.min_sea(&r.mesh)))
        .fold(f64::INFINITY, f64::min);
    let steps_seen = runs.iter().all(|r| r.snapshots.len() == r.totals.len());
    outcome(
        mass_residual <= 1e-6 && budget <= 1e-6 && rho_min >= 0.0 && b_min >= 0.0 && steps_seen,
        format!("KFP mass residual {mass_residual:.1e}, spatial budget residual {budget:.1e}, min ρ {rho_min:.1e}, min B {b_min:.1e}"),
    )
}

fn main() {
    let mut failed = vec![];
    let mut report = |id: usize, name: &str, t: Instant, o: Outcome| {
        println!(
            "[{}] {id:>2} {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
        if !o.pass {
            failed.push(id);
        }
    };
    let info = |text: String| println!("[INFO]    {text}");

    let t = Instant::now();
    report(1, "calibration round-trip", t, c1_noiseless_round_trip());
    let t = Instant::now();
    report(2, "calibration under noise", t, c2_noisy_regressor());
    let t = Instant::now();
    report(3, "adjoint gradient", t, c3_adjoint_gradient());
    let t = Instant::now();
    report(4, "KFP optimization improvement", t, c4_kfp_improvement());
    let t = Instant::now();
    report(5, "PDE vs Monte Carlo", t, c5_pde_vs_monte_carlo());
    let t = Instant::now();
    report(6, "neural policy beats constants", t, c6_neural_policy());
    let t = Instant::now();
    let (o, alt) = c7_feedback();
    report(7, "feedback stabilization", t, o);
    info(alt);
    let t = Instant::now();
    report(8, "plankton closed form and bound", t, c8_plankton());

    let t = Instant::now();
    let t0 = Instant::now();
    let no_quota = spatial_run(QuotaMode::NoQuota, 0);
    let d0 = t0.elapsed();
    let t1 = Instant::now();
    let with_quota = spatial_run(QuotaMode::WithQuota, 0);
    let d1 = t1.elapsed();
    let (o, seeds) = c9_spatial(&no_quota, &with_quota, [d0, d1]);
    report(9, "spatial scenarios", t, o);
    info(seeds);
    let t = Instant::now();
    report(
        10,
        "conservation suite",
        t,
        c10_conservation([&no_quota, &with_quota]),
    );

    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
