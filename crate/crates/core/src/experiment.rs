//! Declarative experiments: the TOML schema, the end-to-end pipeline and the
//! invariant suite.

use std::fs;
use std::path::Path;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupled::BlockSystem;
use crate::deformation::{check_admissibility, integrate_deformation, mu_min, solve_lame_fixed_point, LameSolver};
use crate::error::{Error, Result};
use crate::fem::{forms, random_field};
use crate::geometry::{GeometryConfig, Mesh, SolidShape};
use crate::simulation::{default_schedule, random_compatible_state, run, Control, CoupledState, Integrator};
use crate::spectral::{solve_eigs, split_spectrum};
use crate::stabilization::{
    assemble_b, build_control_basis, project_and_check_controllability, project_control, solve_riccati, RankReport,
};

/// The bundled default experiment.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Target decay rate.
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometrySection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub container_radius: f64,
    pub solid: SolidShape,
    #[serde(default)]
    pub solid_center: [f64; 2],
    #[serde(default = "one")]
    pub solid_density: f64,
    #[serde(default = "one")]
    pub viscosity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub mesh_size: f64,
    #[serde(default = "default_eigen_count")]
    pub eigen_count: usize,
    /// Mesh in the `mesh2d v1` text format, used instead of the built-in
    /// mesher. Relative paths are resolved against the config file.
    pub mesh_file: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlFamily {
    Trigonometric,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_family")]
    pub family: ControlFamily,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            modes: default_modes(),
            family: default_family(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// Smoothed random compatible state.
    Random,
    /// The eigenvector with index `eigenmode` (1-based).
    Eigenmode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Defaults to 8 / lambda.
    pub t_end: Option<f64>,
    /// Defaults to min(1e-2, 0.1 / lambda).
    pub dt: Option<f64>,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
    #[serde(default = "default_eigenmode")]
    pub eigenmode: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing_passes: usize,
    #[serde(default = "default_snapshots")]
    pub deformation_snapshots: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            t_end: None,
            dt: None,
            initial: default_initial(),
            eigenmode: default_eigenmode(),
            smoothing_passes: default_smoothing(),
            deformation_snapshots: default_snapshots(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Mesh,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            formats: default_formats(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_eigen_count() -> usize {
    10
}
fn default_modes() -> usize {
    6
}
fn default_family() -> ControlFamily {
    ControlFamily::Trigonometric
}
fn default_initial() -> InitialCondition {
    InitialCondition::Random
}
fn default_eigenmode() -> usize {
    1
}
fn default_smoothing() -> usize {
    3
}
fn default_snapshots() -> usize {
    20
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Mesh]
}

/// 1-based line of the first assignment to `key`, for error messages.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

impl ExperimentConfig {
    /// Parses and validates a config; errors carry the offending line.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fail = |key: &str, msg: String| {
            let at = line_of(text, key).map_or(String::new(), |l| format!("line {l}: "));
            Err(Error::Config(format!("{at}{msg}")))
        };
        if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
            return fail("lambda", format!("lambda must be positive, got {}", cfg.lambda));
        }
        if !(cfg.discretization.mesh_size > 0.0) {
            return fail("mesh_size", "mesh_size must be positive".into());
        }
        if cfg.discretization.eigen_count == 0 {
            return fail("eigen_count", "eigen_count must be at least 1".into());
        }
        if cfg.control.modes == 0 {
            return fail("modes", "control modes must be at least 1".into());
        }
        if let Some(dt) = cfg.simulation.dt {
            if !(dt > 0.0) {
                return fail("dt", format!("dt must be positive, got {dt}"));
            }
        }
        if let Some(t) = cfg.simulation.t_end {
            if !(t > 0.0) {
                return fail("t_end", format!("t_end must be positive, got {t}"));
            }
        }
        let k = cfg.simulation.eigenmode;
        if cfg.simulation.initial == InitialCondition::Eigenmode && !(1..=cfg.discretization.eigen_count).contains(&k) {
            return fail(
                "eigenmode",
                format!(
                    "eigenmode {k} is outside the {} computed modes",
                    cfg.discretization.eigen_count
                ),
            );
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.discretization.mesh_file, path.parent()) {
            cfg.discretization.mesh_file = Some(dir.join(file).to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    /// The block system on the imported mesh if one is configured, otherwise
    /// on the generated one.
    pub fn build_system(&self) -> Result<BlockSystem> {
        match &self.discretization.mesh_file {
            Some(file) => {
                let text = fs::read_to_string(file).map_err(|e| Error::Config(format!("mesh file {file}: {e}")))?;
                let mesh = Mesh::from_text(&text).map_err(|e| e.in_stage("mesh"))?;
                BlockSystem::from_mesh(&mesh, self.geometry.solid_density, self.geometry.viscosity)
            }
            None => BlockSystem::from_config(&self.geometry_config()),
        }
    }

    pub fn geometry_config(&self) -> GeometryConfig {
        let g = &self.geometry;
        GeometryConfig {
            container_radius: g.container_radius,
            solid: g.solid,
            solid_center: g.solid_center,
            solid_density: g.solid_density,
            viscosity: g.viscosity,
            mesh_size: self.discretization.mesh_size,
        }
    }

    /// (dt, t_end) after defaults.
    pub fn schedule(&self) -> (f64, f64) {
        let (dt, t) = default_schedule(self.lambda);
        (self.simulation.dt.unwrap_or(dt), self.simulation.t_end.unwrap_or(t))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub lambda: f64,
    pub seed: u64,
    pub mesh_size: f64,
    pub n_state: usize,
    pub eigenvalues: Vec<f64>,
    pub unstable_dimension: usize,
    pub rank: RankReport,
    pub riccati_residual: f64,
    pub closed_loop_poles: Vec<[f64; 2]>,
    pub measured_rate: f64,
    pub open_loop_rate: f64,
    pub target_met: bool,
    pub added_mass: [[f64; 3]; 3],
    pub constraint_max: [f64; 3],
    pub admissible: bool,
    pub deformation_mu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub checks: Vec<Check>,
}

/// Every artifact of a run, as text.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub mesh: String,
    pub spectrum_csv: String,
    pub gain_json: String,
    pub trajectory_csv: String,
    pub constraints_json: String,
    pub deformation_csv: Vec<String>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary is serializable")
    }

    pub fn write(&self, dir: &Path, formats: &[OutputFormat]) -> Result<()> {
        fs::create_dir_all(dir)?;
        if formats.contains(&OutputFormat::Mesh) {
            fs::write(dir.join("mesh.txt"), &self.mesh)?;
        }
        if formats.contains(&OutputFormat::Csv) {
            fs::write(dir.join("spectrum.csv"), &self.spectrum_csv)?;
            fs::write(dir.join("trajectory.csv"), &self.trajectory_csv)?;
            let d = dir.join("deformation");
            fs::create_dir_all(&d)?;
            for (k, s) in self.deformation_csv.iter().enumerate() {
                fs::write(d.join(format!("snapshot_{k:03}.csv")), s)?;
            }
        }
        if formats.contains(&OutputFormat::Json) {
            fs::write(dir.join("gain.json"), &self.gain_json)?;
            fs::write(dir.join("constraints.json"), &self.constraints_json)?;
        }
        fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}

fn matrix3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

/// mesh -> operators -> spectrum -> feedback -> simulation -> deformation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let blocks = cfg.build_system()?;
    let lambda = cfg.lambda;
    let decomp = solve_eigs(&blocks, cfg.discretization.eigen_count, 0.0).map_err(|e| e.in_stage("spectral"))?;
    let unstable = split_spectrum(&decomp, lambda).map_err(|e| e.in_stage("spectral"))?;

    let stab = |e: Error| e.in_stage("stabilization");
    let basis = build_control_basis(&blocks, cfg.control.modes).map_err(stab)?;
    let inj = assemble_b(&basis, &blocks, lambda);
    let modal = project_control(&unstable, &inj);
    let rank = project_and_check_controllability(&modal);
    let gain = solve_riccati(&modal.a_u, &modal.b_u, lambda).map_err(stab)?;

    let sim = |e: Error| e.in_stage("simulation");
    let (dt, t_end) = cfg.schedule();
    let m = basis.dim();
    let initial = match cfg.simulation.initial {
        InitialCondition::Random => {
            random_compatible_state(&blocks, cfg.seed, cfg.simulation.smoothing_passes, m).map_err(sim)?
        }
        InitialCondition::Eigenmode => CoupledState {
            x: decomp.eigenvectors[cfg.simulation.eigenmode - 1].clone(),
            control: vec![0.0; m],
            time: 0.0,
        },
    };
    let integ = Integrator::new(&blocks, Some(&basis), dt, 0.0).map_err(sim)?;
    let control = Control::Feedback {
        gain: &gain,
        modal: &modal,
        unstable: &unstable,
    };
    let closed = run(&integ, initial.clone(), t_end, &control, false).map_err(sim)?;
    let measured_rate = closed
        .decay_rate((2.0 / lambda, (8.0 / lambda).min(t_end)))
        .map_err(sim)?;
    let mu1 = decomp.eigenvalues[0].abs();
    let open_end = t_end.max(8.0 / mu1);
    let open = run(&integ, initial, open_end, &Control::Zero, false).map_err(sim)?;
    let open_loop_rate = open.decay_rate((2.0 / mu1, 8.0 / mu1)).map_err(sim)?;

    let def = |e: Error| e.in_stage("deformation");
    let steps = closed.times.len() - 1;
    let stride = steps.div_ceil(cfg.simulation.deformation_snapshots.max(1)).max(1);
    let samples: Vec<usize> = (0..=steps).step_by(stride).collect();
    let shifted = |k: usize| -> Vec<f64> {
        let s = (lambda * k as f64 * dt).exp();
        closed.controls[k].iter().map(|c| c * s).collect()
    };
    let probe = basis.datum(&vec![1.0; m]);
    let mu = solve_lame_fixed_point(&blocks, &probe, mu_min(&blocks).map_err(def)?)
        .map_err(def)?
        .mu;
    let lame = LameSolver::new(&blocks, mu).map_err(def)?;
    let mut phis = Vec::with_capacity(samples.len());
    for &k in &samples {
        phis.push(lame.fixed_point(&basis.datum(&shifted(k))).map_err(def)?.phi);
    }
    let times: Vec<f64> = samples.iter().map(|&k| k as f64 * dt).collect();
    let report = check_admissibility(&blocks, &phis);
    let deformation = integrate_deformation(&times, &phis, lambda).map_err(def)?;

    let summary = Summary {
        lambda,
        seed: cfg.seed,
        mesh_size: cfg.discretization.mesh_size,
        n_state: blocks.n_x(),
        eigenvalues: decomp.eigenvalues.clone(),
        unstable_dimension: unstable.dim(),
        rank,
        riccati_residual: gain.riccati_residual,
        closed_loop_poles: gain.closed_loop_poles.clone(),
        measured_rate,
        open_loop_rate,
        target_met: measured_rate >= 0.95 * lambda,
        added_mass: matrix3(&blocks.madd),
        constraint_max: report.max,
        admissible: report.admissible,
        deformation_mu: mu,
        dt,
        t_end,
        checks: Vec::new(),
    };
    let mut checks = VerifyReport::default();
    checks.below("Riccati residual", gain.riccati_residual, 1e-8);
    let worst = gain
        .closed_loop_poles
        .iter()
        .map(|p| p[0])
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(
        "closed-loop poles below -lambda",
        worst,
        -lambda,
        gain.n() == 0 || worst < -lambda,
        "",
    );
    checks.push(
        "Kalman rank",
        summary.rank.rank as f64,
        summary.rank.n as f64,
        summary.rank.controllable,
        "",
    );
    checks.push("decay rate", measured_rate, 0.95 * lambda, summary.target_met, "");
    checks.push(
        "deformation admissible",
        report.max.iter().copied().fold(0.0, f64::max),
        f64::NAN,
        report.admissible,
        "",
    );
    let summary = Summary {
        checks: checks.checks,
        ..summary
    };
    Ok(ExperimentOutput {
        mesh: blocks.spaces.mesh.to_text(),
        spectrum_csv: decomp.to_csv(),
        gain_json: serde_json::to_string_pretty(&gain.to_json()).expect("gain is serializable"),
        trajectory_csv: closed.to_csv(),
        constraints_json: serde_json::to_string_pretty(&report.to_json()).expect("report is serializable"),
        deformation_csv: (0..deformation.times.len())
            .map(|k| deformation.snapshot_csv(&blocks, k))
            .collect(),
        summary,
    })
}

/// One invariant check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn push(&mut self, name: &str, value: f64, threshold: f64, passed: bool, note: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            value,
            threshold,
            note: note.into(),
        });
    }

    fn below(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, threshold, value <= threshold, "");
    }

    fn failed(&mut self, name: &str, err: &Error) {
        self.push(name, f64::NAN, f64::NAN, false, err.to_string());
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check.
    pub fn to_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                let status = if c.passed { "PASS" } else { "FAIL" };
                let note = if c.note.is_empty() {
                    String::new()
                } else {
                    format!("  ({})", c.note)
                };
                format!(
                    "{status} {:<32} value {:>12.4e}  threshold {:>10.3e}{note}\n",
                    c.name, c.value, c.threshold
                )
            })
            .collect()
    }
}

/// Runs the property checks of every module; failures are reported, not
/// raised.
pub fn verify(cfg: &ExperimentConfig) -> VerifyReport {
    let mut r = VerifyReport::default();
    let blocks = match cfg.build_system() {
        Ok(b) => b,
        Err(e) => {
            r.failed("build", &e);
            return r;
        }
    };
    r.push(
        "inf-sup constant",
        blocks.spaces.inf_sup,
        crate::fem::INF_SUP_FLOOR,
        blocks.spaces.inf_sup >= crate::fem::INF_SUP_FLOOR,
        "",
    );
    r.below("mass symmetry", blocks.mc.asymmetry(), 1e-12);
    r.below("viscous symmetry", blocks.kc.asymmetry(), 1e-12);
    let madd = &blocks.madd;
    r.below("added mass symmetry", (madd - madd.transpose()).amax(), 0.0);
    let min_eig = madd.symmetric_eigenvalues().min();
    r.push("added mass min eigenvalue", min_eig, -1e-10, min_eig >= -1e-10, "");
    let gap = (madd - blocks.madd_boundary).amax() / madd.amax();
    r.below("added mass boundary form", gap, 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lap = forms::vector_laplacian(&blocks.spaces.solid);
    let v = random_field(&blocks.spaces.solid, None, &mut rng);
    let korn = lap.bilinear(&v, &v) / blocks.forms.solid_strain.bilinear(&v, &v);
    r.below("solid Korn ratio", korn, 1.0 + 1e-12);

    let decomp = match solve_eigs(&blocks, cfg.discretization.eigen_count, 0.0) {
        Ok(d) => d,
        Err(e) => {
            r.failed("spectrum", &e);
            return r;
        }
    };
    r.below(
        "eigen residual",
        decomp.residuals.iter().copied().fold(0.0, f64::max),
        1e-8,
    );
    r.below("eigen imaginary part", decomp.max_imag, 1e-10);
    let top = decomp.eigenvalues[0];
    r.push("eigenvalues negative", top, 0.0, top < 0.0, "");

    let basis = match build_control_basis(&blocks, cfg.control.modes) {
        Ok(b) => b,
        Err(e) => {
            r.failed("control basis", &e);
            return r;
        }
    };
    r.below("control Gram condition", basis.gram_condition(&blocks), 1e6);
    match mu_min(&blocks).and_then(|mu| LameSolver::new(&blocks, mu)) {
        Ok(lame) => {
            let mut worst_gap = 0.0f64;
            let mut worst_ratio = 0.0f64;
            for zeta in &basis.modes {
                match (lame.fixed_point(zeta), lame.bordered(zeta)) {
                    (Ok(fp), Ok(direct)) => {
                        worst_gap = worst_gap.max(crate::deformation::relative_difference(&fp.phi, &direct.phi));
                        let res = crate::deformation::constraint_residuals(&blocks, &fp.phi);
                        let tol = crate::deformation::constraint_tolerance(&blocks, &fp.phi);
                        worst_ratio = worst_ratio.max(res.iter().copied().fold(0.0, f64::max) / tol);
                    }
                    (Err(e), _) | (_, Err(e)) => r.failed("deformation solve", &e),
                }
            }
            r.below("fixed point vs bordered", worst_gap, 1e-8);
            r.below("constraint residual / tol", worst_ratio, 1.0);
        }
        Err(e) => r.failed("deformation solver", &e),
    }

    let unstable = match split_spectrum(&decomp, cfg.lambda) {
        Ok(u) => u,
        Err(e) => {
            r.failed("spectral split", &e);
            return r;
        }
    };
    let modal = project_control(&unstable, &assemble_b(&basis, &blocks, cfg.lambda));
    let rank = project_and_check_controllability(&modal);
    r.push(
        "Kalman rank",
        rank.rank as f64,
        rank.n as f64,
        rank.controllable,
        format!("N = {}, m = {}", rank.n, rank.m),
    );
    match solve_riccati(&modal.a_u, &modal.b_u, cfg.lambda) {
        Ok(g) => {
            r.below("Riccati residual", g.riccati_residual, 1e-8);
            let worst = g
                .closed_loop_poles
                .iter()
                .map(|p| p[0])
                .fold(f64::NEG_INFINITY, f64::max);
            r.push(
                "closed-loop poles below -lambda",
                worst,
                -cfg.lambda,
                g.n() == 0 || worst < -cfg.lambda,
                "",
            );
            let pi = &g.riccati_solution;
            let min = if pi.nrows() == 0 {
                0.0
            } else {
                pi.symmetric_eigenvalues().min()
            };
            r.push("Riccati solution PSD", min, -1e-10, min >= -1e-10, "");
        }
        Err(e) => r.failed("Riccati solve", &e),
    }
    r
}

/// Applies `name=value` overrides used by parameter sweeps.
pub fn with_override(cfg: &ExperimentConfig, name: &str, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match name {
        "lambda" => c.lambda = value,
        "mesh_size" | "h" => c.discretization.mesh_size = value,
        "dt" => c.simulation.dt = Some(value),
        "t_end" => c.simulation.t_end = Some(value),
        "viscosity" => c.geometry.viscosity = value,
        "solid_density" => c.geometry.solid_density = value,
        _ => return Err(Error::Config(format!("unknown sweep parameter `{name}`"))),
    }
    let text = toml::to_string(&c).map_err(|e| Error::Config(e.to_string()))?;
    ExperimentConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests;
