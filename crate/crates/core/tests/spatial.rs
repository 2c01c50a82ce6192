use fishquota::spatial::{
    current_velocity, run_spatial, run_spatial_from, solve_stream_potential, step_biomass,
    step_plankton, BiomassCoefficients, Field, LandRect, Mesh, MeshConfig, PlanktonBoundary,
    PlanktonCoefficients, QuotaMode, SpatialConfig, VelocityField,
};

fn mesh(cells: usize) -> Mesh {
    Mesh::from_config(&MeshConfig {
        cells,
        ..Default::default()
    })
    .unwrap()
}

fn small_config(mode: QuotaMode, seed: u64) -> SpatialConfig {
    let mut cfg = SpatialConfig {
        mode,
        seed,
        ..Default::default()
    };
    cfg.mesh.cells = 30;
    cfg.fleet.boats = 12;
    cfg.params.horizon = 0.6;
    cfg
}

fn plankton(mu: f64) -> PlanktonCoefficients {
    PlanktonCoefficients {
        b: 1.0,
        mu,
        boundary: PlanktonBoundary::Neumann,
    }
}

#[test]
fn frozen_fish_plankton_follows_the_logistic_closed_form() {
    let m = mesh(10);
    let c = 0.7;
    let b = Field::from_fn(&m, |_| 1.0 - c);
    let mut p = Field::from_fn(&m, |_| 0.5 * c);
    let v = VelocityField::zero(&m);
    let dt = 1e-3;
    for _ in 0..2000 {
        p = step_plankton(&m, &p, &b, &v, &plankton(0.0), dt).unwrap();
    }
    let exact = c * (c * 2.0_f64).exp() / (1.0 + (c * 2.0_f64).exp());
    for k in (0..m.len()).filter(|&k| m.sea[k]) {
        assert!(
            (p.values[k] - exact).abs() < 1e-3,
            "{} vs {exact}",
            p.values[k]
        );
    }
}

fn assert_bound(m: &Mesh, p: &Field, b: &Field) {
    for k in (0..m.len()).filter(|&k| m.sea[k]) {
        let cap = 1.0 - b.values[k];
        assert!(
            p.values[k] >= 0.0 && p.values[k] <= cap + 1e-12,
            "P = {} above {cap}",
            p.values[k]
        );
    }
}

#[test]
fn plankton_bound_holds_pointwise_without_transport() {
    let m = mesh(20);
    let b = Field::from_fn(&m, |[x, y]| 0.2 + 0.6 * ((x * y).sin() * 0.5 + 0.5));
    let mut p = Field::from_fn(&m, |[x, y]| {
        (1.0 - 0.2 - 0.6 * ((x * y).sin() * 0.5 + 0.5)) * (0.5 + 0.5 * (x + y).cos().abs())
    });
    let v = VelocityField::zero(&m);
    for _ in 0..200 {
        p = step_plankton(&m, &p, &b, &v, &plankton(0.0), 0.01).unwrap();
        assert_bound(&m, &p, &b);
    }
}

#[test]
fn plankton_bound_holds_with_current_and_diffusion_under_uniform_fish() {
    let m = mesh(30);
    let b = Field::from_fn(&m, |_| 0.4);
    let mut p = Field::from_fn(&m, |[x, y]| 0.6 * (0.5 + 0.5 * (x - y).sin()));
    let stream = solve_stream_potential(&m, |x| x - 6.0, |_| 0.0).unwrap();
    let dt = 0.004;
    for n in 0..250 {
        let v = current_velocity(&m, &stream, n as f64 * dt, 10.0, 2.0 * std::f64::consts::PI);
        p = step_plankton(&m, &p, &b, &v, &plankton(0.1), dt).unwrap();
        assert_bound(&m, &p, &b);
    }
}

#[test]
fn zero_plankton_stays_zero() {
    let m = mesh(20);
    let b = Field::from_fn(&m, |[x, _]| x / 6.0);
    let mut p = Field::zeros(&m);
    for _ in 0..50 {
        p = step_plankton(&m, &p, &b, &VelocityField::zero(&m), &plankton(0.1), 0.01).unwrap();
    }
    assert!(p.values.iter().all(|v| *v == 0.0));
}

#[test]
fn uniform_fish_follow_the_logistic_ode() {
    let m = mesh(10);
    let coef = BiomassCoefficients {
        r: 1.0,
        kappa: 1.0,
        nu: 0.1,
    };
    let p = Field::from_fn(&m, |_| 1.0);
    let none = Field::zeros(&m);
    let mut b = Field::from_fn(&m, |_| 0.1);
    for _ in 0..2000 {
        b = step_biomass(&m, &b, &p, &VelocityField::zero(&m), &none, &coef, 1e-3)
            .unwrap()
            .0;
    }
    let exact = 1.0 / (1.0 + 9.0 * (-2.0_f64).exp());
    let sea: Vec<f64> = (0..m.len())
        .filter(|&k| m.sea[k])
        .map(|k| b.values[k])
        .collect();
    assert!(
        sea.iter().all(|v| (v - sea[0]).abs() < 1e-12),
        "field lost uniformity"
    );
    assert!((sea[0] - exact).abs() < 1e-3, "{} vs {exact}", sea[0]);
}

#[test]
fn zero_initial_data_stays_zero() {
    let cfg = small_config(QuotaMode::WithQuota, 0);
    let m = Mesh::from_config(&cfg.mesh).unwrap();
    let run = run_spatial_from(&cfg, &m, Field::zeros(&m), Field::zeros(&m)).unwrap();
    assert!(run.b.values.iter().chain(&run.p.values).all(|v| *v == 0.0));
}

#[test]
fn biomass_budget_closes_and_stays_non_negative() {
    for mode in [QuotaMode::NoQuota, QuotaMode::WithQuota] {
        let run = run_spatial(&small_config(mode, 1)).unwrap();
        assert!(
            run.max_budget_residual() <= 1e-6,
            "{mode:?}: residual {}",
            run.max_budget_residual()
        );
        for s in &run.snapshots {
            assert!(s.b.min_sea(&run.mesh) >= 0.0);
        }
        assert!(run.totals.iter().all(|r| r.q >= 0.0));
    }
}

#[test]
fn same_seed_same_run() {
    let a = run_spatial(&small_config(QuotaMode::WithQuota, 7)).unwrap();
    let b = run_spatial(&small_config(QuotaMode::WithQuota, 7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn boats_never_leave_the_sea() {
    let mut cfg = small_config(QuotaMode::NoQuota, 2);
    cfg.fleet.sigma_pos = 0.3;
    cfg.mesh.land = vec![LandRect {
        x0: 2.0,
        x1: 3.0,
        y0: 5.0,
        y1: 7.0,
    }];
    let run = run_spatial(&cfg).unwrap();
    for fleet in &run.fleet_log {
        assert!(
            fleet.boats.iter().all(|b| run.mesh.in_sea(b.pos)),
            "boat left the sea"
        );
    }
}

#[test]
fn fleetless_still_run_is_reproducible() {
    let mut cfg = small_config(QuotaMode::NoQuota, 5);
    cfg.fleet.boats = 0;
    cfg.params.current_amplitude = 0.0;
    let a = run_spatial(&cfg).unwrap();
    let mut other = cfg.clone();
    other.seed = 6;
    assert_eq!(a.totals, run_spatial(&other).unwrap().totals);
}
