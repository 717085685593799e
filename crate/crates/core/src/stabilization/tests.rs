use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::geometry::GeometryConfig;
use crate::linalg::norm;
use crate::spectral::{solve_eigs, split_spectrum, SpectralDecomposition};

struct Setup {
    blocks: BlockSystem,
    decomp: SpectralDecomposition,
    basis: ControlBasis,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let blocks = BlockSystem::from_config(&GeometryConfig::concentric_disks(0.3, 1.0, 0.2)).unwrap();
        let decomp = solve_eigs(&blocks, 10, 0.0).unwrap();
        let basis = build_control_basis(&blocks, DEFAULT_MODES).unwrap();
        Setup { blocks, decomp, basis }
    })
}

fn modal(lambda: f64, basis: &ControlBasis) -> (UnstableSubspace, ModalSystem) {
    let s = setup();
    let u = split_spectrum(&s.decomp, lambda).unwrap();
    let inj = assemble_b(basis, &s.blocks, lambda);
    let sys = project_control(&u, &inj);
    (u, sys)
}

fn default_lambda() -> f64 {
    1.5 * setup().decomp.eigenvalues[0].abs()
}

#[test]
fn default_family_is_flux_free_and_well_conditioned() {
    let s = setup();
    assert_eq!(s.basis.dim(), 6);
    for m in &s.basis.modes {
        assert!(m.flux(&s.blocks.spaces, &s.blocks.forms).abs() <= MODE_FLUX_TOL);
        assert!((m.l2_norm(&s.blocks.spaces, &s.blocks.forms) - 1.0).abs() < 1e-12);
    }
    assert!(s.basis.gram_condition(&s.blocks) <= 1e3);
}

#[test]
fn single_spin_mode_is_accepted() {
    let s = setup();
    let b = build_control_basis(&s.blocks, 1).unwrap();
    assert_eq!(b.labels, vec!["tangential k=0".to_string()]);
    assert!(b.modes[0].flux(&s.blocks.spaces, &s.blocks.forms).abs() <= 1e-12);
}

#[test]
fn normal_mode_is_rejected_by_the_flux_check() {
    let s = setup();
    let n = InterfaceField::from_fn(&s.blocks.spaces, |_, n, _| n);
    let err = ControlBasis::from_modes(&s.blocks, vec![n], vec!["normal k=0".into()]).unwrap_err();
    match err {
        Error::FluxViolation { flux, .. } => {
            let exact = 2.0 * PI * 0.3;
            // polygonal boundary at h = 0.2
            assert!((flux.abs() - exact).abs() < 2.0 * 0.2 * 0.2 * exact, "{flux}")
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn dependent_modes_are_rejected() {
    let s = setup();
    let t = s.basis.modes[0].clone();
    let err = ControlBasis::from_modes(&s.blocks, vec![t.clone(), t], vec!["a".into(), "b".into()]).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn zero_mode_gives_zero_column() {
    let s = setup();
    let zero = ControlBasis {
        modes: vec![InterfaceField::zeros(&s.blocks.spaces)],
        labels: vec!["zero".into()],
        liftings: vec![vec![0.0; s.blocks.spaces.n_velocity()]],
    };
    let inj = assemble_b(&zero, &s.blocks, 3.0);
    assert!(inj.columns[0].iter().all(|&v| v == 0.0));
}

#[test]
fn injection_reproduces_the_direct_steady_state() {
    let s = setup();
    let lambda = default_lambda();
    let inj = assemble_b(&s.basis, &s.blocks, lambda);
    for j in 0..s.basis.dim() {
        let mut c = vec![0.0; s.basis.dim()];
        c[j] = 1.0;
        let (u1, r1) = steady_response(&s.blocks, &s.basis, &inj, &c).unwrap();
        let (u2, r2) = steady_response_direct(&s.blocks, &s.basis.modes[j], lambda).unwrap();
        let du: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
        let mf = &s.blocks.forms.mass;
        let rel = mf.bilinear(&du, &du).sqrt() / mf.bilinear(&u2, &u2).sqrt();
        assert!(rel <= 1e-8, "mode {j}: {rel:e}");
        let dr = (0..3).map(|i| (r1[i] - r2[i]).abs()).fold(0.0, f64::max);
        let sr = r2.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
        assert!(dr <= 1e-8 * sr.max(1.0), "mode {j}: rigid {r1:?} vs {r2:?}");
    }
}

#[test]
fn injection_is_affine_in_lambda() {
    let s = setup();
    let a = assemble_b(&s.basis, &s.blocks, 4.0);
    let b = assemble_b(&s.basis, &s.blocks, 8.0);
    for j in 0..s.basis.dim() {
        let d: Vec<f64> = (0..a.columns[j].len())
            .map(|i| b.columns[j][i] - a.columns[j][i] - 4.0 * a.mass_part[j][i])
            .collect();
        assert!(norm(&d) <= 1e-12 * norm(&b.columns[j]));
    }
}

#[test]
fn default_family_controls_the_unstable_modes() {
    let s = setup();
    let (_, sys) = modal(default_lambda(), &s.basis);
    assert!(sys.n() >= 1);
    let r = project_and_check_controllability(&sys);
    assert_eq!(r.rank, r.n);
    assert!(r.controllable);
}

#[test]
fn larger_unstable_space_is_still_controllable() {
    let s = setup();
    let mu = &s.decomp.eigenvalues;
    // include the first pair as well
    let lambda = 0.5 * (mu[2].abs() + mu[3].abs());
    let (_, sys) = modal(lambda, &s.basis);
    assert_eq!(sys.n(), 3);
    assert!(project_and_check_controllability(&sys).controllable);
}

#[test]
fn obstructed_controls_lose_rank() {
    let s = setup();
    let lambda = default_lambda();
    let (u, sys) = modal(lambda, &s.basis);
    let obstructed = obstruction_basis(&s.basis, &sys);
    assert_eq!(obstructed.dim(), s.basis.dim() - sys.n());
    let inj = assemble_b(&obstructed, &s.blocks, lambda);
    let sys2 = project_control(&u, &inj);
    let r = project_and_check_controllability(&sys2);
    assert!(r.rank < r.n);
    assert!(solve_riccati(&sys2.a_u, &sys2.b_u, lambda).is_err());
}

#[test]
fn spin_only_control_misses_the_pair() {
    let s = setup();
    let mu = &s.decomp.eigenvalues;
    let lambda = 0.5 * (mu[2].abs() + mu[3].abs());
    let spin = build_control_basis(&s.blocks, 1).unwrap();
    let (_, sys) = modal(lambda, &spin);
    let r = project_and_check_controllability(&sys);
    assert_eq!(r.n, 3);
    assert!(r.rank < 3);
}

#[test]
fn empty_unstable_space_is_trivially_controllable() {
    let sys = ModalSystem {
        lambda: 1.0,
        a_u: DMatrix::zeros(0, 0),
        b_u: DMatrix::zeros(0, 6),
        coupling: DMatrix::zeros(0, 6),
        input_scale: 0.0,
    };
    let r = project_and_check_controllability(&sys);
    assert!(r.controllable && r.rank == 0);
    let g = solve_riccati(&sys.a_u, &sys.b_u, 1.0).unwrap();
    assert_eq!((g.m(), g.n()), (6, 0));
    assert_eq!(g.apply(&[]), vec![0.0; 6]);
}

#[test]
fn scalar_riccati_matches_closed_form() {
    for (alpha, beta, lambda) in [(-1.0f64, 2.0f64, 3.0f64), (-14.7, 0.8, 22.0), (0.5, 1e-2, 0.1)] {
        let a = alpha + lambda;
        let pi_exact = (a + (a * a + beta * beta).sqrt()) / (beta * beta);
        let g = solve_riccati(
            &DMatrix::from_element(1, 1, alpha),
            &DMatrix::from_element(1, 1, beta),
            lambda,
        )
        .unwrap();
        let pi = g.riccati_solution[(0, 0)];
        assert!((pi - pi_exact).abs() <= 1e-10 * pi_exact, "{pi} vs {pi_exact}");
        let pole = g.closed_loop_poles[0][0] + lambda;
        assert!((pole + (a * a + beta * beta).sqrt()).abs() <= 1e-9 * pole.abs());
    }
}

#[test]
fn zero_input_has_no_riccati_solution() {
    let err = solve_riccati(&DMatrix::from_element(2, 2, 0.0), &DMatrix::zeros(2, 3), 1.0).unwrap_err();
    assert!(matches!(err, Error::RiccatiNoSolution(_)));
}

#[test]
fn default_feedback_meets_its_invariants() {
    let s = setup();
    let lambda = default_lambda();
    let (u, sys) = modal(lambda, &s.basis);
    let g = solve_riccati(&sys.a_u, &sys.b_u, lambda).unwrap();
    assert!(g.riccati_residual <= RICCATI_TOL);
    let pi = &g.riccati_solution;
    assert_eq!(pi, &pi.transpose());
    assert!(pi.symmetric_eigenvalues().min() >= -1e-10);
    assert!(g.closed_loop_poles.iter().all(|p| p[0] < -lambda));
    // K (I - P_u) = 0
    let x: Vec<f64> = (0..s.blocks.n_x()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let x = s.blocks.project_divergence_free(&x).unwrap();
    let px = u.project(&s.blocks.mc, &x);
    let rest: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
    let c = g.apply(&u.coordinates(&s.blocks.mc, &rest));
    let c_full = g.apply(&u.coordinates(&s.blocks.mc, &x));
    assert!(norm(&c) <= 1e-10 * norm(&c_full));
    let json = g.to_json();
    for key in [
        "lambda",
        "N",
        "m",
        "riccati_residual",
        "closed_loop_poles",
        "gain_matrix",
    ] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn riccati_invariants_hold_on_random_modal_systems(
        mus in prop::collection::vec(-20.0f64..-0.5, 1..5),
        entries in prop::collection::vec(-3.0f64..3.0, 8),
        lambda in 1.0f64..25.0,
    ) {
        let n = mus.len();
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(mus.clone()));
        let b = DMatrix::from_fn(n, 2, |i, j| entries[(2 * i + j) % 8] + if i == j { 4.0 } else { 0.0 });
        prop_assume!(kalman_rank(&a, &b) == n);
        let g = solve_riccati(&a, &b, lambda).unwrap();
        let scale = 1.0 + g.riccati_solution.norm().powi(2) * b.norm().powi(2);
        prop_assert!(g.riccati_residual <= 1e-8 * scale);
        prop_assert!(g.riccati_solution.symmetric_eigenvalues().min() >= -1e-10);
        prop_assert!(g.closed_loop_poles.iter().all(|p| p[0] < -lambda));
    }

    #[test]
    fn kalman_rank_of_diagonal_systems_counts_reached_modes(
        mus in prop::collection::vec(-20.0f64..-0.5, 1..6),
        hidden in prop::collection::vec(any::<bool>(), 6),
    ) {
        // distinct eigenvalues; B hits mode i unless hidden[i]
        let n = mus.len();
        let mut d = mus.clone();
        d.iter_mut().enumerate().for_each(|(i, v)| *v -= 25.0 * i as f64);
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d));
        let b = DMatrix::from_fn(n, 1, |i, _| if hidden[i] { 0.0 } else { 1.0 + i as f64 });
        let reached = (0..n).filter(|&i| !hidden[i]).count();
        prop_assert_eq!(kalman_rank(&a, &b), reached);
    }
}
