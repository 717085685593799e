use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::GeometryConfig;
use crate::spectral::{solve_eigs, split_spectrum, SpectralDecomposition};
use crate::stabilization::{build_control_basis, project_control, solve_riccati, DEFAULT_MODES};

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

fn eigen_state(i: usize, m: usize) -> CoupledState {
    let s = setup();
    CoupledState {
        x: s.decomp.eigenvectors[i].clone(),
        control: vec![0.0; m],
        time: 0.0,
    }
}

fn mc_dist(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    setup().blocks.mc.bilinear(&d, &d).sqrt()
}

#[test]
fn zero_state_stays_zero() {
    let s = setup();
    let integ = Integrator::new(&s.blocks, Some(&s.basis), 1e-2, 0.0).unwrap();
    let z = CoupledState::zero(&s.blocks, 6);
    let next = integ.step(&z, &[0.0; 6]).unwrap();
    assert!(next.x.iter().all(|&v| v == 0.0));
    assert_eq!(next.time, 1e-2);
}

#[test]
fn nonpositive_step_is_rejected() {
    let s = setup();
    for dt in [0.0, -1e-3, f64::NAN] {
        assert!(matches!(
            Integrator::new(&s.blocks, None, dt, 0.0).err().unwrap(),
            Error::InvalidInput(_)
        ));
    }
}

#[test]
fn eigenvector_decays_at_its_eigenvalue() {
    let s = setup();
    let mu = s.decomp.eigenvalues[0];
    for dt in [1e-2, 5e-3] {
        let integ = Integrator::new(&s.blocks, None, dt, 0.0).unwrap();
        let x1 = integ.step(&eigen_state(0, 0), &[]).unwrap().x;
        let exact: Vec<f64> = s.decomp.eigenvectors[0].iter().map(|v| v * (mu * dt).exp()).collect();
        // midpoint: local error (mu dt)^3 / 12 plus the eigen-residual
        assert!(mc_dist(&x1, &exact) <= (mu * dt).abs().powi(3) / 12.0 * 1.1 + 1e-8);
    }
}

fn energy_defect(dt: f64, x0: &CoupledState) -> f64 {
    let s = setup();
    let integ = Integrator::new(&s.blocks, None, dt, 0.0).unwrap();
    let x1 = integ.step(x0, &[]).unwrap();
    let de = integ.energy(&x1) - integ.energy(x0);
    let diss = 0.5 * dt * (integ.dissipation(x0) + integ.dissipation(&x1));
    (de + diss).abs()
}

#[test]
fn energy_identity_has_third_order_local_defect() {
    let s = setup();
    let x0 = random_compatible_state(&s.blocks, 3, 4, 0).unwrap();
    let d: Vec<f64> = [4e-3, 2e-3, 1e-3].iter().map(|&dt| energy_defect(dt, &x0)).collect();
    for w in d.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((2.7..=3.3).contains(&order), "defects {d:?}");
    }
}

#[test]
fn midpoint_energy_balance_is_exact_at_the_midpoint() {
    let s = setup();
    let x0 = random_compatible_state(&s.blocks, 4, 2, 0).unwrap();
    let integ = Integrator::new(&s.blocks, None, 1e-2, 0.0).unwrap();
    let x1 = integ.step(&x0, &[]).unwrap();
    let mid = CoupledState {
        x: x0.x.iter().zip(&x1.x).map(|(a, b)| 0.5 * (a + b)).collect(),
        control: vec![],
        time: 0.0,
    };
    let de = integ.energy(&x1) - integ.energy(&x0);
    assert!((de + 1e-2 * integ.dissipation(&mid)).abs() <= 1e-9 * de.abs());
}

#[test]
fn open_loop_decays_at_the_leading_rate() {
    let s = setup();
    let mu1 = s.decomp.eigenvalues[0].abs();
    let (dt, _) = default_schedule(mu1);
    let integ = Integrator::new(&s.blocks, Some(&s.basis), dt, 0.0).unwrap();
    let traj = run(&integ, eigen_state(0, 6), 8.0 / mu1, &Control::Zero, false).unwrap();
    let rate = traj.decay_rate((2.0 / mu1, 8.0 / mu1)).unwrap();
    assert!((rate - mu1).abs() <= 0.03 * mu1, "{rate} vs {mu1}");
}

#[test]
fn closed_loop_beats_the_target_rate() {
    let s = setup();
    let lambda = 1.5 * s.decomp.eigenvalues[0].abs();
    let unstable = split_spectrum(&s.decomp, lambda).unwrap();
    let inj = crate::stabilization::assemble_b(&s.basis, &s.blocks, lambda);
    let modal = project_control(&unstable, &inj);
    let gain = solve_riccati(&modal.a_u, &modal.b_u, lambda).unwrap();
    let (dt, t_end) = default_schedule(lambda);
    let integ = Integrator::new(&s.blocks, Some(&s.basis), dt, 0.0).unwrap();
    let x0 = random_compatible_state(&s.blocks, 11, 3, 6).unwrap();
    let control = Control::Feedback {
        gain: &gain,
        modal: &modal,
        unstable: &unstable,
    };
    let traj = run(&integ, x0.clone(), t_end, &control, false).unwrap();
    let rate = traj.decay_rate((2.0 / lambda, 8.0 / lambda)).unwrap();
    assert!(rate >= 0.95 * lambda, "{rate} < {lambda}");
    let open = run(&integ, x0, t_end, &Control::Zero, false).unwrap();
    assert!(open.decay_rate((2.0 / lambda, 8.0 / lambda)).unwrap() < lambda);
}

#[test]
fn shifted_system_is_the_rescaled_physical_system() {
    let s = setup();
    let lambda = 1.5 * s.decomp.eigenvalues[0].abs();
    let dt = 2e-5;
    let zeta = |t: f64| -> Vec<f64> {
        (0..6)
            .map(|j| (1.0 + j as f64) * 0.1 * (8.0 * t * (j + 1) as f64).sin())
            .collect()
    };
    let shifted_zeta = |t: f64| -> Vec<f64> { zeta(t).iter().map(|c| c * (lambda * t).exp()).collect() };
    let plain = Integrator::new(&s.blocks, Some(&s.basis), dt, 0.0).unwrap();
    let shifted = Integrator::new(&s.blocks, Some(&s.basis), dt, lambda).unwrap();
    let mut x0 = eigen_state(0, 6);
    for (i, v) in s.decomp.eigenvectors[1].iter().enumerate() {
        x0.x[i] += 0.5 * v;
    }
    let t_end = 4.0 / lambda;
    let a = run(&plain, x0.clone(), t_end, &Control::Open(&zeta), true).unwrap();
    let b = run(&shifted, x0, t_end, &Control::Open(&shifted_zeta), true).unwrap();
    let mut worst: f64 = 0.0;
    for ((t, xa), xb) in a.times.iter().zip(&a.states).zip(&b.states) {
        let scaled: Vec<f64> = xa.iter().map(|v| v * (lambda * t).exp()).collect();
        let rel = mc_dist(&scaled, xb) / s.blocks.mc.bilinear(xb, xb).sqrt();
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn incompatible_initial_data_is_rejected() {
    let s = setup();
    let spaces = &s.blocks.spaces;
    let datum = RigidDatum::new([0.2, -0.1], 0.7);
    let mut u = spaces.rigid_field(datum.h, datum.omega);
    for &k in &spaces.outer_nodes {
        u[2 * k] = 0.0;
        u[2 * k + 1] = 0.0;
    }
    let ok = CoupledState::from_fluid(&s.blocks, &u, datum, 0).unwrap();
    assert!(crate::linalg::norm(&s.blocks.bc.matvec(&ok.x)) < 1e-9);
    let bad = RigidDatum::new([0.2, -0.1], 0.0);
    assert!(matches!(
        CoupledState::from_fluid(&s.blocks, &u, bad, 0).unwrap_err(),
        Error::InvalidInput(_)
    ));
}

#[test]
fn trajectory_csv_has_the_documented_columns() {
    let s = setup();
    let integ = Integrator::new(&s.blocks, Some(&s.basis), 1e-2, 0.0).unwrap();
    let traj = run(&integ, eigen_state(0, 6), 0.05, &Control::Zero, false).unwrap();
    let csv = traj.to_csv();
    assert!(csv.starts_with("t,energy,|h'|,|omega|,zeta_1,zeta_2,zeta_3,zeta_4,zeta_5,zeta_6\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn fit_recovers_exact_exponentials() {
    let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let e: Vec<f64> = t.iter().map(|t| (-2.0 * 0.7 * t).exp()).collect();
    assert!((measure_decay(&t, &e, (0.0, 5.0)).unwrap() - 0.7).abs() <= 1e-6);
    let c = vec![3.0; 50];
    assert!(measure_decay(&t, &c, (0.0, 5.0)).unwrap().abs() <= 1e-12);
}

#[test]
fn fit_tolerates_multiplicative_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.02).collect();
    let e: Vec<f64> = t
        .iter()
        .map(|t| (-2.0 * 1.3 * t).exp() * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
        .collect();
    let rate = measure_decay(&t, &e, (0.0, 4.0)).unwrap();
    assert!((rate - 1.3).abs() <= 0.02 * 1.3, "{rate}");
}

#[test]
fn fit_rejects_degenerate_data() {
    let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let mut e = vec![1.0; 20];
    e[5] = 0.0;
    assert!(matches!(
        measure_decay(&t, &e, (0.0, 19.0)).unwrap_err(),
        Error::DegenerateFit(_)
    ));
    assert!(matches!(
        measure_decay(&t, &[1.0; 20], (0.0, 5.0)).unwrap_err(),
        Error::DegenerateFit(_)
    ));
}
