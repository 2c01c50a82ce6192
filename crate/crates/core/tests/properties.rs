use fishquota::calibrate::{
    calibrate_root, observation_map, CalibrationSetup, CoefficientVector, ObservationVector,
    RootOptions,
};
use fishquota::feedback::{run_feedback, FeedbackState};
use fishquota::grid::{Grid2D, GridField};
use fishquota::kfp::{project_box, solve_forward_with, stable_dt, Boundary, KfpScheme};
use fishquota::neural::Mlp;
use fishquota::sde::{simulate_paths, ModelParams, QuotaPolicy};
use fishquota::spatial::quota_from_totals;
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn simulated_biomass_stays_positive(sigma in 0.0..0.8f64, u1 in 0.4..1.4f64, u2 in 0.4..1.4f64, seed in any::<u64>()) {
        let p = ModelParams::two_species().with_noise(sigma);
        let pol = QuotaPolicy::constant(vec![u1, u2], p.u_min, p.u_max);
        for path in simulate_paths(&p, &pol, 0.02, 8, seed).unwrap() {
            prop_assert!(path.states.iter().all(|s| s.b.iter().all(|b| *b >= 0.0 && b.is_finite())));
        }
    }

    #[test]
    fn clamped_network_stays_in_the_box(seed in any::<u64>(), x in prop::array::uniform2(-1e3..1e3f64)) {
        let net = Mlp::random(&[2, 8, 8, 2], seed).unwrap().with_clamp(0.4, 1.4);
        prop_assert!(net.eval(&x).unwrap().iter().all(|u| (0.4..=1.4).contains(u)));
    }

    #[test]
    fn policies_return_values_in_the_box(u in prop::array::uniform2(-5.0..5.0f64), b in prop::array::uniform2(0.0..4.0f64)) {
        let g = Grid2D::new(0.0, 3.0, 8).unwrap();
        let grid = QuotaPolicy::grid(GridField::from_fn(g, 2, |[x, y]| vec![u[0] * x, u[1] * y]), 0.4, 1.4);
        let constant = QuotaPolicy::constant(u.to_vec(), 0.4, 1.4);
        for pol in [grid, constant] {
            prop_assert!(pol.eval(&b, 0.0).iter().all(|v| (0.4..=1.4).contains(v)));
        }
    }

    #[test]
    fn feedback_update_respects_bounds(u0 in -2.0..3.0f64, omega in -1e3..1e3f64, steps in prop::collection::vec(0.0..3.0f64, 1..20)) {
        let mut s = FeedbackState::new(vec![u0], vec![1.0], omega, 0.4, 1.4);
        for b in steps {
            s.update(&[b]);
            prop_assert!((0.4..=1.4).contains(&s.u[0]));
        }
    }

    #[test]
    fn projection_is_a_box_projection(vals in prop::collection::vec(-3.0..3.0f64, 128)) {
        let g = Grid2D::new(0.0, 1.0, 8).unwrap();
        let mut u = GridField::constant(g, &[0.0, 0.0]);
        u.values = vec![vals[..64].to_vec(), vals[64..].to_vec()];
        let once = project_box(&u, 0.4, 1.4);
        prop_assert!(once.values.iter().flatten().all(|v| (0.4..=1.4).contains(v)));
        prop_assert_eq!(project_box(&once, 0.4, 1.4), once);
    }

    #[test]
    fn quota_is_never_negative(q in 0.0..1.0f64, now in 0.0..100.0f64, prev in 0.0..100.0f64, dt in 0.0..1.0f64) {
        prop_assert!(quota_from_totals(q, now, prev, dt) >= 0.0);
    }
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn feedback_never_reads_the_target(bd in prop::array::uniform2(0.0..3.0f64), seed in any::<u64>()) {
        let p = ModelParams::two_species();
        let q = ModelParams { b_desired: bd.to_vec(), ..p.clone() };
        let a = run_feedback(&p, 100.0, None, 0.02, 4, seed).unwrap();
        let b = run_feedback(&q, 100.0, None, 0.02, 4, seed).unwrap();
        prop_assert!(a == b);
    }

    #[test]
    fn kfp_mass_is_accounted_and_density_non_negative(u in prop::array::uniform2(0.4..1.4f64), sigma in 0.05..0.3f64, outflow in any::<bool>()) {
        let mut p = ModelParams::two_species().with_noise(sigma);
        p.horizon = 0.5;
        let g = Grid2D::new(0.0, 3.0, 24).unwrap();
        let u = GridField::constant(g, &u);
        let scheme = KfpScheme { boundary: if outflow { Boundary::Outflow } else { Boundary::NoFlux }, ..Default::default() };
        let dt = stable_dt(&g, &p, &u, scheme).unwrap();
        let (rho, _) = solve_forward_with(&g, &p, &u, dt, scheme).unwrap();
        for (m, out) in rho.mass.iter().zip(&rho.outflow) {
            prop_assert!((1.0 - m - out).abs() <= 1e-6);
        }
        for (_, slice) in &rho.checkpoints {
            prop_assert!(slice.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn calibration_round_trips(z in prop::array::uniform4(0.5..3.0f64)) {
        let setup = CalibrationSetup::reference();
        let truth = CoefficientVector::from_array(z);
        let obs = ObservationVector { t1: setup.t1, t2: setup.t2, z: observation_map(&truth, &setup).unwrap() };
        let res = calibrate_root(&obs, &truth.scaled(1.1), &setup, &RootOptions::default()).unwrap();
        for (got, want) in res.z.to_array().iter().zip(z) {
            prop_assert!((got / want - 1.0).abs() < 1e-6, "truth {:?}, got {:?}", z, res.z);
        }
    }
}
