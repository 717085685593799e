use std::sync::OnceLock;

use nalgebra::Matrix3;

use super::dofmap::DofMap;
use super::lifting::StokesLifter;
use super::neumann::{interface_moments, solve_neumann, NeumannSolver, RigidDatum};
use crate::error::{Error, Result};
use crate::fem::{assemble_forms, build_spaces, FormLibrary, FunctionSpaces};
use crate::geometry::{
    build_geometry, generate_mesh, solid_moments, GeometryConfig, Mesh, RigidBodyData, DEFAULT_MIN_ANGLE_DEG,
};
use crate::linalg::{Csr, SaddleSolver, Triplets};

/// The discrete coupled fluid/rigid-body system.
///
/// States live in the reduced coordinates of `dofs`: interior fluid velocity
/// dofs followed by (h'_1, h'_2, omega). On divergence-free states the mass
/// `mc` equals M0 + Madd written in these coordinates, `kc` is 2 nu (D u, D u)
/// of the coupled field (so the generator is -kc) and `bc` is the
/// divergence constraint.
pub struct BlockSystem {
    pub spaces: FunctionSpaces,
    pub forms: FormLibrary,
    pub rigid: RigidBodyData,
    pub dofs: DofMap,
    pub mc: Csr,
    pub kc: Csr,
    pub bc: Csr,
    /// Rigid part of M0: (M, M, I0).
    pub m0_rigid: [f64; 3],
    /// Galerkin added mass (grad q_i, grad q_j) over the rigid generators.
    pub madd: Matrix3<f64>,
    /// The boundary-integral form [C N, C N^; C^ N, C^ N^] of the same block.
    pub madd_boundary: Matrix3<f64>,
    /// Neumann potentials of e1, e2 and the unit rotation.
    pub potentials: [Vec<f64>; 3],
    pub neumann: NeumannSolver,
    pub lifter: StokesLifter,
    mass_saddle: OnceLock<SaddleSolver>,
}

impl BlockSystem {
    /// Geometry -> mesh -> spaces -> forms -> block system.
    pub fn from_config(config: &GeometryConfig) -> Result<BlockSystem> {
        let config = build_geometry(config.clone()).map_err(|e| e.in_stage("geometry"))?;
        let mesh = generate_mesh(&config).map_err(|e| e.in_stage("mesh"))?;
        Self::from_mesh(&mesh, config.solid_density, config.viscosity)
    }

    /// Builds the system on a given (for example imported) mesh.
    pub fn from_mesh(mesh: &Mesh, solid_density: f64, viscosity: f64) -> Result<BlockSystem> {
        if !(solid_density > 0.0 && viscosity > 0.0) {
            return Err(Error::InvalidInput("density and viscosity must be positive".into()).in_stage("geometry"));
        }
        mesh.validate(DEFAULT_MIN_ANGLE_DEG).map_err(|e| e.in_stage("mesh"))?;
        let rigid = solid_moments(mesh, solid_density).map_err(|e| e.in_stage("geometry"))?;
        let spaces = build_spaces(mesh).map_err(|e| e.in_stage("discretization"))?;
        let forms = assemble_forms(&spaces, viscosity);
        assemble_block_system(spaces, forms, rigid).map_err(|e| e.in_stage("coupled_operators"))
    }

    pub fn n_x(&self) -> usize {
        self.dofs.n_x()
    }

    pub fn n_p(&self) -> usize {
        self.bc.n_rows
    }

    pub fn rigid_part<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.dofs.rigid_offset()..]
    }

    /// Full fluid velocity of a reduced state.
    pub fn fluid_velocity(&self, x: &[f64]) -> Vec<f64> {
        self.dofs.expand(x)
    }

    /// Mass-weighted constraint saddle [[Mc, Bc^T], [Bc, 0]], factorized once.
    pub fn mass_saddle(&self) -> Result<&SaddleSolver> {
        if let Some(s) = self.mass_saddle.get() {
            return Ok(s);
        }
        let s = SaddleSolver::new(&self.mc, &self.bc, Some(&self.forms.pressure_mean))?;
        Ok(self.mass_saddle.get_or_init(|| s))
    }

    /// Mc-orthogonal projection onto the divergence-free coupled states.
    pub fn project_divergence_free(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.mc.matvec(x);
        Ok(self.mass_saddle()?.solve(&f, None)?.0)
    }

    /// Solves Mc y = r on the constrained subspace (r is a functional).
    pub fn mass_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mass_saddle()?.solve(r, None)?.0)
    }

    /// Reduced state with the given fluid field and rigid velocity; the
    /// interface values of `u` are overwritten by the rigid trace.
    pub fn state_from_parts(&self, u: &[f64], datum: RigidDatum) -> Vec<f64> {
        let mut x = vec![0.0; self.n_x()];
        for (i, t) in self.dofs.targets.iter().enumerate() {
            if let super::dofmap::Target::Free(j) = *t {
                x[j] = u[i];
            }
        }
        let o = self.dofs.rigid_offset();
        x[o..].copy_from_slice(&datum.as_array());
        x
    }
}

pub fn assemble_block_system(spaces: FunctionSpaces, forms: FormLibrary, rigid: RigidBodyData) -> Result<BlockSystem> {
    if !(rigid.mass > 0.0 && rigid.inertia > 0.0) {
        return Err(Error::InvalidInput("rigid mass and inertia must be positive".into()));
    }
    let dofs = DofMap::coupled(&spaces);
    let n_x = dofs.n_x();
    let o = dofs.rigid_offset();
    let m0_rigid = [rigid.mass, rigid.mass, rigid.inertia];
    let mut mt = Triplets::new(n_x, n_x);
    mt.add_block(&dofs.reduce(&forms.mass), 0, 0, 1.0);
    for (r, &m) in m0_rigid.iter().enumerate() {
        mt.push(o + r, o + r, m);
    }
    let mc = mt.to_csr();
    let kc = dofs.reduce(&forms.viscous);
    let bc = dofs.reduce_cols(&forms.divergence);

    let neumann = NeumannSolver::new(&forms)?;
    let sols = RigidDatum::generators().map(|g| solve_neumann(&spaces, &neumann, g));
    let mut potentials: [Vec<f64>; 3] = Default::default();
    for (i, s) in sols.into_iter().enumerate() {
        potentials[i] = s?.potential;
    }
    let mut madd = Matrix3::zeros();
    let mut madd_boundary = Matrix3::zeros();
    for j in 0..3 {
        let m = interface_moments(&spaces, &potentials[j]);
        for i in 0..3 {
            madd[(i, j)] = neumann.energy(&potentials[i], &potentials[j]);
            madd_boundary[(i, j)] = m[i];
        }
    }
    // exact symmetry; the Galerkin form is symmetric up to roundoff
    madd = (madd + madd.transpose()) * 0.5;
    let lifter = StokesLifter::new(&spaces, &forms)?;
    Ok(BlockSystem {
        spaces,
        forms,
        rigid,
        dofs,
        mc,
        kc,
        bc,
        m0_rigid,
        madd,
        madd_boundary,
        potentials,
        neumann,
        lifter,
        mass_saddle: OnceLock::new(),
    })
}
