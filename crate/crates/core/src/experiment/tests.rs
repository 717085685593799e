use std::sync::OnceLock;

use super::*;

fn default_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(DEFAULT_CONFIG).unwrap()
}

fn default_run() -> &'static ExperimentOutput {
    static RUN: OnceLock<ExperimentOutput> = OnceLock::new();
    RUN.get_or_init(|| run_experiment(&default_config()).unwrap())
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_toml_str(text) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn default_config_parses_with_defaults() {
    let cfg = default_config();
    assert_eq!(cfg.control.modes, 6);
    assert_eq!(cfg.discretization.eigen_count, 10);
    let (dt, t_end) = cfg.schedule();
    assert_eq!(dt, 0.1 / cfg.lambda);
    assert_eq!(t_end, 8.0 / cfg.lambda);
}

#[test]
fn zero_lambda_is_rejected_with_its_line() {
    let text = DEFAULT_CONFIG.replace("lambda = 22.0", "lambda = 0.0");
    let msg = config_error(&text);
    assert!(msg.contains("line 2"), "{msg}");
    assert!(msg.contains("lambda"), "{msg}");
}

#[test]
fn missing_mesh_size_names_the_field() {
    let text = DEFAULT_CONFIG.replace("mesh_size = 0.1\n", "");
    let msg = config_error(&text);
    assert!(msg.contains("mesh_size"), "{msg}");
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    config_error(&DEFAULT_CONFIG.replace("modes = 6", "modes = 6\nmodez = 2"));
    config_error(&DEFAULT_CONFIG.replace("initial = \"random\"", "initial = \"random\"\ndt = -1.0"));
    let msg = config_error(&DEFAULT_CONFIG.replace("initial = \"random\"", "initial = \"eigenmode\"\neigenmode = 11"));
    assert!(msg.contains("eigenmode 11"), "{msg}");
}

#[test]
fn overrides_revalidate() {
    let cfg = default_config();
    assert_eq!(with_override(&cfg, "lambda", 3.0).unwrap().lambda, 3.0);
    assert!(with_override(&cfg, "lambda", -1.0).is_err());
    assert!(with_override(&cfg, "colour", 1.0).is_err());
}

#[test]
fn default_run_meets_the_target_rate() {
    let out = default_run();
    let s = &out.summary;
    assert!(
        s.measured_rate >= 0.95 * s.lambda,
        "rate {} for lambda {}",
        s.measured_rate,
        s.lambda
    );
    assert!(s.open_loop_rate < s.lambda);
    assert_eq!(s.rank.rank, s.unstable_dimension);
    assert!(s.admissible);
    assert!(s.checks.iter().all(|c| c.passed), "{:?}", s.checks);
}

#[test]
fn default_run_emits_every_artifact() {
    let out = default_run();
    let dir = std::env::temp_dir().join(format!("fluidbody-experiment-{}", std::process::id()));
    out.write(&dir, &default_formats()).unwrap();
    for f in [
        "mesh.txt",
        "spectrum.csv",
        "gain.json",
        "trajectory.csv",
        "constraints.json",
        "summary.json",
    ] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    assert!(dir.join("deformation/snapshot_000.csv").is_file());
    let summary: serde_json::Value = serde_json::from_str(&out.summary_json()).unwrap();
    assert!(summary["measured_rate"].is_number());
    assert!(summary["rank"]["controllable"].as_bool().unwrap());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn reruns_are_bit_identical() {
    let mut cfg = default_config();
    cfg.discretization.mesh_size = 0.2;
    cfg.simulation.deformation_snapshots = 4;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.spectrum_csv, b.spectrum_csv);
    assert_eq!(a.trajectory_csv, b.trajectory_csv);
    assert_eq!(a.deformation_csv, b.deformation_csv);
    assert_eq!(a.gain_json, b.gain_json);
    cfg.seed += 1;
    let c = run_experiment(&cfg).unwrap();
    assert_ne!(a.trajectory_csv, c.trajectory_csv);
}

#[test]
fn eigenmode_initial_condition_decays_at_its_own_rate() {
    let mut cfg = default_config();
    cfg.discretization.mesh_size = 0.2;
    cfg.simulation.initial = InitialCondition::Eigenmode;
    cfg.simulation.deformation_snapshots = 2;
    let out = run_experiment(&cfg).unwrap();
    let mu1 = out.summary.eigenvalues[0].abs();
    assert!((out.summary.open_loop_rate - mu1).abs() <= 0.03 * mu1);
}

#[test]
fn default_verify_passes() {
    let report = verify(&default_config());
    assert!(report.all_passed(), "{}", report.to_text());
    assert!(report.checks.len() >= 15);
}

#[test]
fn single_tangential_mode_shows_rank_deficiency() {
    let mut cfg = default_config();
    cfg.discretization.mesh_size = 0.2;
    cfg.control.modes = 1;
    cfg.lambda = 40.0;
    let report = verify(&cfg);
    let rank = report.checks.iter().find(|c| c.name == "Kalman rank").unwrap();
    assert!(!rank.passed);
    assert!(rank.value < rank.threshold);
    assert!(rank.threshold > 1.0);
}

#[test]
fn lambda_on_the_spectrum_is_reported() {
    let mut cfg = default_config();
    cfg.discretization.mesh_size = 0.2;
    let decomp = solve_eigs(&BlockSystem::from_config(&cfg.geometry_config()).unwrap(), 10, 0.0).unwrap();
    cfg.lambda = -decomp.eigenvalues[0];
    let report = verify(&cfg);
    let split = report.checks.iter().find(|c| c.name == "spectral split").unwrap();
    assert!(!split.passed);
    assert!(split.note.to_lowercase().contains("spectrum"), "{}", split.note);
}

#[test]
fn imported_mesh_reproduces_the_generated_one() {
    let mut cfg = default_config();
    cfg.discretization.mesh_size = 0.2;
    let generated = cfg.build_system().unwrap();
    let dir = std::env::temp_dir().join(format!("fluidbody-mesh-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("disk.mesh"), generated.spaces.mesh.to_text()).unwrap();
    let text = DEFAULT_CONFIG.replace("eigen_count = 10", "eigen_count = 10\nmesh_file = \"disk.mesh\"");
    std::fs::write(dir.join("experiment.toml"), text).unwrap();
    let imported = ExperimentConfig::from_path(&dir.join("experiment.toml"))
        .unwrap()
        .build_system()
        .unwrap();
    assert_eq!(imported.n_x(), generated.n_x());
    assert!((imported.madd - generated.madd).amax() <= 1e-12);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn missing_mesh_file_is_a_config_error() {
    let mut cfg = default_config();
    cfg.discretization.mesh_file = Some("/nonexistent/disk.mesh".into());
    assert!(matches!(cfg.build_system(), Err(Error::Config(_))));
}
