use super::dofmap::DofMap;
use crate::error::{Error, Result};
use crate::fem::{FormLibrary, FunctionSpaces};
use crate::linalg::{dot, norm, SaddleSolver};

/// Velocity datum at the fluid interface nodes (same order as
/// `FunctionSpaces::interface_nodes`).
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceField {
    pub values: Vec<[f64; 2]>,
}

impl InterfaceField {
    pub fn zeros(spaces: &FunctionSpaces) -> Self {
        InterfaceField {
            values: vec![[0.0; 2]; spaces.interface_nodes.len()],
        }
    }

    /// Samples `f(y, n, tau)` at each interface node, where `n` is the nodal
    /// normal (out of the fluid) and `tau` the counter-clockwise tangent.
    pub fn from_fn(spaces: &FunctionSpaces, f: impl Fn([f64; 2], [f64; 2], [f64; 2]) -> [f64; 2]) -> Self {
        let values = spaces
            .interface_nodes
            .iter()
            .zip(&spaces.interface_normals)
            .map(|(&k, &n)| f(spaces.fluid.nodes[k], n, [n[1], -n[0]]))
            .collect();
        InterfaceField { values }
    }

    pub fn rigid(spaces: &FunctionSpaces, h: [f64; 2], omega: f64) -> Self {
        Self::from_fn(spaces, |y, _, _| [h[0] - omega * y[1], h[1] + omega * y[0]])
    }

    /// Full fluid vector carrying the datum on the interface, zero elsewhere.
    pub fn to_fluid(&self, spaces: &FunctionSpaces) -> Vec<f64> {
        let mut v = vec![0.0; spaces.n_velocity()];
        for (&k, val) in spaces.interface_nodes.iter().zip(&self.values) {
            v[2 * k] = val[0];
            v[2 * k + 1] = val[1];
        }
        v
    }

    pub fn from_fluid(spaces: &FunctionSpaces, v: &[f64]) -> Self {
        InterfaceField {
            values: spaces
                .interface_nodes
                .iter()
                .map(|&k| [v[2 * k], v[2 * k + 1]])
                .collect(),
        }
    }

    /// Net flux along the fluid-exterior normal.
    pub fn flux(&self, spaces: &FunctionSpaces, forms: &FormLibrary) -> f64 {
        dot(&forms.boundary_flux, &self.to_fluid(spaces))
    }

    pub fn l2_norm(&self, spaces: &FunctionSpaces, forms: &FormLibrary) -> f64 {
        let v = self.to_fluid(spaces);
        forms.interface_mass.bilinear(&v, &v).max(0.0).sqrt()
    }

    pub fn inner(&self, other: &Self, spaces: &FunctionSpaces, forms: &FormLibrary) -> f64 {
        forms
            .interface_mass
            .bilinear(&self.to_fluid(spaces), &other.to_fluid(spaces))
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            v[0] += a * o[0];
            v[1] += a * o[1];
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            v[0] *= a;
            v[1] *= a;
        }
    }
}

/// Stokes extension of an interface datum: divergence free, zero on the wall.
#[derive(Clone, Debug)]
pub struct LiftedField {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

pub const FLUX_TOL: f64 = 1e-8;

/// Factorized Dirichlet Stokes problem on the fluid.
pub struct StokesLifter {
    map: DofMap,
    saddle: SaddleSolver,
}

impl StokesLifter {
    pub fn new(spaces: &FunctionSpaces, forms: &FormLibrary) -> Result<StokesLifter> {
        let map = DofMap::dirichlet(spaces);
        let k = map.reduce(&forms.viscous);
        let b = map.reduce_cols(&forms.divergence);
        let saddle = SaddleSolver::new(&k, &b, Some(&forms.pressure_mean))?;
        Ok(StokesLifter { map, saddle })
    }

    pub fn map(&self) -> &DofMap {
        &self.map
    }

    /// Stokes solve with boundary values `datum` (a full fluid vector whose
    /// boundary entries are used) and body load `load` (full fluid vector).
    pub fn solve(&self, forms: &FormLibrary, datum: &[f64], load: Option<&[f64]>) -> Result<LiftedField> {
        let d = self.map.fixed_part(datum);
        let kd = forms.viscous.matvec(&d);
        let mut f: Vec<f64> = self.map.pullback(&kd).iter().map(|x| -x).collect();
        if let Some(l) = load {
            let lr = self.map.pullback(l);
            f.iter_mut().zip(&lr).for_each(|(a, b)| *a += b);
        }
        let g: Vec<f64> = forms.divergence.matvec(&d).iter().map(|x| -x).collect();
        let (x, pressure) = self.saddle.solve(&f, Some(&g))?;
        let mut velocity = self.map.expand(&x);
        velocity.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        Ok(LiftedField { velocity, pressure })
    }
}

/// L0 / L^0 applied to an interface datum; rejects data with net flux.
pub fn lift_stokes(
    spaces: &FunctionSpaces,
    forms: &FormLibrary,
    lifter: &StokesLifter,
    datum: &InterfaceField,
) -> Result<LiftedField> {
    let flux = datum.flux(spaces, forms);
    let scale = datum.l2_norm(spaces, forms);
    if flux.abs() > FLUX_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::FluxViolation {
            flux,
            tol: FLUX_TOL * scale,
        });
    }
    let v = datum.to_fluid(spaces);
    if norm(&v) == 0.0 {
        return Ok(LiftedField {
            velocity: v,
            pressure: vec![0.0; spaces.n_pressure()],
        });
    }
    lifter.solve(forms, &v, None)
}
