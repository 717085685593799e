use fluidbody::deformation::integrate_deformation;
use fluidbody::experiment::{with_override, ExperimentConfig, DEFAULT_CONFIG};
use fluidbody::geometry::{generate_mesh, GeometryConfig, Mesh};
use fluidbody::simulation::measure_decay;
use fluidbody::stabilization::{scalar_riccati, solve_riccati};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mesh_text_round_trips(a in 0.2f64..0.5, h in 0.15f64..0.3) {
        let mesh = generate_mesh(&GeometryConfig::concentric_disks(a, 1.0, h)).unwrap();
        let back = Mesh::from_text(&mesh.to_text()).unwrap();
        prop_assert_eq!(back, mesh);
    }
}

proptest! {
    #[test]
    fn decay_fit_recovers_exponentials(rate in 0.1f64..50.0, amp in 1e-3f64..1e3) {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.05 / rate).collect();
        let e: Vec<f64> = t.iter().map(|t| amp * (-2.0 * rate * t).exp()).collect();
        let fit = measure_decay(&t, &e, (0.0, t[199])).unwrap();
        prop_assert!((fit - rate).abs() <= 1e-9 * rate);
    }

    #[test]
    fn deformation_is_linear_in_the_velocity(
        p in prop::collection::vec(-1.0f64..1.0, 12),
        q in prop::collection::vec(-1.0f64..1.0, 12),
        s in -3.0f64..3.0,
        lambda in 0.5f64..30.0,
    ) {
        let times: Vec<f64> = (0..4).map(|k| k as f64 * 0.1).collect();
        let snaps = |v: &[f64]| -> Vec<Vec<f64>> { (0..4).map(|k| v[3 * k..3 * k + 3].to_vec()).collect() };
        let combo: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + s * b).collect();
        let x = integrate_deformation(&times, &snaps(&p), lambda).unwrap();
        let y = integrate_deformation(&times, &snaps(&q), lambda).unwrap();
        let z = integrate_deformation(&times, &snaps(&combo), lambda).unwrap();
        for k in 0..4 {
            prop_assert!(z.displacements[k].iter().all(|v| v.is_finite()));
            for i in 0..3 {
                let want = x.displacements[k][i] + s * y.displacements[k][i];
                prop_assert!((z.displacements[k][i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
        prop_assert!(x.displacements[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_feedback_matches_the_closed_form(alpha in -20.0f64..20.0, beta in 0.1f64..5.0, lambda in 0.5f64..10.0) {
        prop_assume!((alpha + lambda).abs() > 1e-3);
        let g = solve_riccati(&DMatrix::from_element(1, 1, alpha), &DMatrix::from_element(1, 1, beta), lambda).unwrap();
        let pi = scalar_riccati(alpha + lambda, beta);
        prop_assert!((g.riccati_solution[(0, 0)] - pi).abs() <= 1e-8 * pi);
        prop_assert!(g.closed_loop_poles[0][0] < -lambda);
    }

    #[test]
    fn positive_overrides_validate_and_others_do_not(lambda in -5.0f64..50.0, h in -0.1f64..0.5) {
        let base = ExperimentConfig::from_toml_str(DEFAULT_CONFIG).unwrap();
        let l = with_override(&base, "lambda", lambda);
        prop_assert_eq!(l.is_ok(), lambda > 0.0);
        let m = with_override(&base, "mesh_size", h);
        prop_assert_eq!(m.is_ok(), h > 0.0);
        if let Ok(cfg) = l {
            prop_assert_eq!(cfg.lambda, lambda);
            prop_assert_eq!(cfg.discretization.mesh_size, base.discretization.mesh_size);
        }
    }
}
