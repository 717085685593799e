//! WebAssembly entry points for the browser demo. Each returns a JSON string
//! that the page plots; the plain Rust functions behind them are what the
//! tests exercise.

use std::f64::consts::PI;

use fluidbody::coupled::BlockSystem;
use fluidbody::geometry::GeometryConfig;
use fluidbody::simulation::{default_schedule, random_compatible_state, run, Control, Integrator};
use fluidbody::spectral::{dirichlet_stokes_eigs, solve_eigs, split_spectrum};
use fluidbody::stabilization::{assemble_b, build_control_basis, project_control, solve_riccati, DEFAULT_MODES};
use fluidbody::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const CONTAINER: f64 = 1.0;

fn check_mesh_size(h: f64) -> Result<()> {
    if (0.05..=0.3).contains(&h) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("mesh size {h} outside [0.05, 0.3]")))
    }
}

fn system(radius: f64, h: f64) -> Result<BlockSystem> {
    check_mesh_size(h)?;
    BlockSystem::from_config(&GeometryConfig::concentric_disks(radius, CONTAINER, h))
}

#[derive(Debug, Serialize)]
pub struct AddedMassCurve {
    pub radii: Vec<f64>,
    pub computed: Vec<f64>,
    pub exact: Vec<f64>,
}

/// Translational added mass of a centred disk for `samples` radii in
/// [0.15, 0.6], with the annulus closed form alongside.
pub fn added_mass(h: f64, samples: usize) -> Result<AddedMassCurve> {
    if !(2..=12).contains(&samples) {
        return Err(Error::InvalidInput(format!("{samples} samples, expected 2 to 12")));
    }
    let radii: Vec<f64> = (0..samples)
        .map(|i| 0.15 + 0.45 * i as f64 / (samples - 1) as f64)
        .collect();
    let computed = radii
        .iter()
        .map(|&a| system(a, h).map(|s| s.madd[(0, 0)]))
        .collect::<Result<Vec<f64>>>()?;
    let b2 = CONTAINER * CONTAINER;
    let exact = radii.iter().map(|a| PI * a * a * (a * a + b2) / (b2 - a * a)).collect();
    Ok(AddedMassCurve { radii, computed, exact })
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub coupled: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub residual: f64,
}

/// Leading coupled eigenvalues next to those of the clamped-body problem.
pub fn spectrum(radius: f64, h: f64, count: usize) -> Result<Spectrum> {
    if !(1..=20).contains(&count) {
        return Err(Error::InvalidInput(format!(
            "{count} eigenvalues requested, expected 1 to 20"
        )));
    }
    let s = system(radius, h)?;
    let d = solve_eigs(&s, count, 0.0)?;
    Ok(Spectrum {
        dirichlet: dirichlet_stokes_eigs(&s, count)?,
        residual: d.residuals.iter().copied().fold(0.0, f64::max),
        coupled: d.eigenvalues,
    })
}

#[derive(Debug, Serialize)]
pub struct DecayCurves {
    pub lambda: f64,
    pub mu1: f64,
    pub unstable_dimension: usize,
    pub times: Vec<f64>,
    pub open_loop: Vec<f64>,
    pub closed_loop: Vec<f64>,
    pub open_rate: f64,
    pub closed_rate: f64,
}

/// Energy histories with and without feedback from the same random state,
/// normalised to start at 1.
pub fn decay(radius: f64, h: f64, lambda: f64, seed: u64) -> Result<DecayCurves> {
    let s = system(radius, h)?;
    let d = solve_eigs(&s, 10, 0.0)?;
    let unstable = split_spectrum(&d, lambda)?;
    let basis = build_control_basis(&s, DEFAULT_MODES)?;
    let modal = project_control(&unstable, &assemble_b(&basis, &s, lambda));
    let gain = solve_riccati(&modal.a_u, &modal.b_u, lambda)?;
    let (dt, t_end) = default_schedule(lambda);
    let integ = Integrator::new(&s, Some(&basis), dt, 0.0)?;
    let x0 = random_compatible_state(&s, seed, 3, DEFAULT_MODES)?;
    let control = Control::Feedback {
        gain: &gain,
        modal: &modal,
        unstable: &unstable,
    };
    let closed = run(&integ, x0.clone(), t_end, &control, false)?;
    let open = run(&integ, x0, t_end, &Control::Zero, false)?;
    let window = (2.0 / lambda, 8.0 / lambda);
    let e0 = closed.energies[0];
    Ok(DecayCurves {
        lambda,
        mu1: d.eigenvalues[0],
        unstable_dimension: unstable.dim(),
        open_rate: open.decay_rate(window)?,
        closed_rate: closed.decay_rate(window)?,
        open_loop: open.energies.iter().map(|e| e / e0).collect(),
        closed_loop: closed.energies.iter().map(|e| e / e0).collect(),
        times: closed.times,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    Ok(serde_json::to_string(&v).expect("plot data is serializable"))
}

#[wasm_bindgen(js_name = addedMassCurve)]
pub fn added_mass_curve(h: f64, samples: usize) -> std::result::Result<String, JsError> {
    to_js(added_mass(h, samples))
}

#[wasm_bindgen(js_name = coupledSpectrum)]
pub fn coupled_spectrum(radius: f64, h: f64, count: usize) -> std::result::Result<String, JsError> {
    to_js(spectrum(radius, h, count))
}

#[wasm_bindgen(js_name = decayCurves)]
pub fn decay_curves(radius: f64, h: f64, lambda: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(decay(radius, h, lambda, seed))
}
