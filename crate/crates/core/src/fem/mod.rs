//! Taylor-Hood (P2 velocity / P1 pressure) spaces and the elementary forms.

mod element;
pub mod forms;
mod space;

pub use element::{edge_values, p2_values, ElementGeom, EDGE_LOCAL};
pub use space::{EdgeDofs, P2Space};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Mesh, Region};
use crate::linalg::{arnoldi, dot, Csr, SaddleSolver};

pub const INF_SUP_FLOOR: f64 = 1e-3;

/// Discrete spaces on both regions plus the boundary node bookkeeping.
#[derive(Clone, Debug)]
pub struct FunctionSpaces {
    pub mesh: Mesh,
    pub fluid: P2Space,
    pub solid: P2Space,
    /// Fluid nodes on the interface, ordered along the boundary edges.
    pub interface_nodes: Vec<usize>,
    /// Fluid nodes on the container wall.
    pub outer_nodes: Vec<usize>,
    /// Solid nodes on the interface, matched one-to-one with `interface_nodes`.
    pub solid_interface_nodes: Vec<usize>,
    /// Unit normal at each interface node, pointing out of the fluid.
    pub interface_normals: Vec<[f64; 2]>,
    pub inf_sup: f64,
}

impl FunctionSpaces {
    pub fn n_velocity(&self) -> usize {
        2 * self.fluid.n_nodes()
    }

    pub fn n_pressure(&self) -> usize {
        self.fluid.n_vertices
    }

    /// The rigid field h' + omega ^ y on every fluid node.
    pub fn rigid_field(&self, h: [f64; 2], omega: f64) -> Vec<f64> {
        self.fluid
            .interpolate_vec(|y| [h[0] - omega * y[1], h[1] + omega * y[0]])
    }

    /// The rigid field on interface nodes, zero elsewhere.
    pub fn rigid_trace(&self, h: [f64; 2], omega: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_velocity()];
        for &n in &self.interface_nodes {
            let y = self.fluid.nodes[n];
            v[2 * n] = h[0] - omega * y[1];
            v[2 * n + 1] = h[1] + omega * y[0];
        }
        v
    }
}

/// Builds both P2 spaces and checks the discrete inf-sup constant.
pub fn build_spaces(mesh: &Mesh) -> Result<FunctionSpaces> {
    let fluid = P2Space::new(mesh, Region::Fluid);
    let solid = P2Space::new(mesh, Region::Solid);
    let interface_nodes = fluid.boundary_nodes(BoundaryTag::Interface);
    let outer_nodes = fluid.boundary_nodes(BoundaryTag::Outer);
    let solid_interface_nodes = solid.boundary_nodes(BoundaryTag::Interface);
    if interface_nodes.len() != solid_interface_nodes.len() {
        return Err(Error::MeshingFailure("interface traces do not match".into()));
    }
    for (&f, &s) in interface_nodes.iter().zip(&solid_interface_nodes) {
        let (a, b) = (fluid.nodes[f], solid.nodes[s]);
        if a != b {
            return Err(Error::MeshingFailure("interface node mismatch".into()));
        }
    }
    let interface_normals = nodal_normals(&fluid, &interface_nodes);
    let inf_sup = inf_sup_estimate(&fluid)?;
    if inf_sup < INF_SUP_FLOOR {
        return Err(Error::InfSupFailure { beta: inf_sup });
    }
    Ok(FunctionSpaces {
        mesh: mesh.clone(),
        fluid,
        solid,
        interface_nodes,
        outer_nodes,
        solid_interface_nodes,
        interface_normals,
        inf_sup,
    })
}

/// Edge normals at midpoints, normalized averages of the two adjacent edge
/// normals at vertices.
fn nodal_normals(fluid: &P2Space, nodes: &[usize]) -> Vec<[f64; 2]> {
    let mut acc = vec![[0.0; 2]; fluid.n_nodes()];
    for e in fluid.edges_tagged(BoundaryTag::Interface) {
        for &k in &e.nodes {
            acc[k][0] += e.normal[0];
            acc[k][1] += e.normal[1];
        }
    }
    nodes
        .iter()
        .map(|&k| {
            let [x, y] = acc[k];
            let r = x.hypot(y);
            [x / r, y / r]
        })
        .collect()
}

/// Smallest singular value of the divergence operator between H1_0 velocities
/// and mean-free L2 pressures, from a Lanczos run on S^{-1} M_p where
/// S = B K^{-1} B^T.
pub fn inf_sup_estimate(fluid: &P2Space) -> Result<f64> {
    let n = 2 * fluid.n_nodes();
    let mut boundary = vec![false; fluid.n_nodes()];
    for e in &fluid.boundary {
        for &k in &e.nodes {
            boundary[k] = true;
        }
    }
    let mut map = vec![None; n];
    let mut free = 0;
    for node in 0..fluid.n_nodes() {
        if !boundary[node] {
            for c in 0..2 {
                map[2 * node + c] = Some(free);
                free += 1;
            }
        }
    }
    let np = fluid.n_vertices;
    let pmap: Vec<Option<usize>> = (0..np).map(Some).collect();
    let k = forms::vector_laplacian(fluid).restrict(&map, free, &map, free);
    let b = forms::divergence(fluid).restrict(&pmap, np, &map, free);
    let mp = forms::pressure_mass(fluid);
    let mean: Vec<f64> = mp.matvec(&vec![1.0; np]);
    let saddle = SaddleSolver::new(&k, &b, Some(&mean))?;
    let zero = vec![0.0; free];
    let mut op = |q: &[f64]| -> Result<Vec<f64>> {
        let g: Vec<f64> = mp.matvec(q).iter().map(|x| -x).collect();
        Ok(saddle.solve(&zero, Some(&g))?.1)
    };
    let metric = |a: &[f64]| mp.matvec(a);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut start: Vec<f64> = (0..np).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let avg = dot(&mean, &start) / dot(&mean, &vec![1.0; np]);
    start.iter_mut().for_each(|x| *x -= avg);
    let kr = arnoldi(&mut op, &metric, &start, 40.min(np - 1))?;
    let sym = (&kr.h + kr.h.transpose()) * 0.5;
    let theta_max = sym.symmetric_eigenvalues().max();
    Ok(1.0 / theta_max.sqrt())
}

/// The assembled elementary forms on both regions.
#[derive(Clone, Debug)]
pub struct FormLibrary {
    pub nu: f64,
    /// Fluid vector mass.
    pub mass: Csr,
    /// Fluid 2 nu (D u, D v).
    pub viscous: Csr,
    /// Fluid -(q, div u), P1 rows.
    pub divergence: Csr,
    pub pressure_mass: Csr,
    /// Integrals of the P1 pressure basis.
    pub pressure_mean: Vec<f64>,
    pub scalar_mass: Csr,
    pub scalar_stiffness: Csr,
    pub scalar_mean: Vec<f64>,
    /// (phi_a e_c, grad phi_b).
    pub gradient: Csr,
    /// Flux functional through the interface along the fluid-exterior normal.
    pub boundary_flux: Vec<f64>,
    /// L2(interface) inner product on fluid vector traces.
    pub interface_mass: Csr,
    pub solid_mass: Csr,
    /// Solid 2 (D u, D v) (no viscosity factor).
    pub solid_strain: Csr,
    pub solid_scalar_mass: Csr,
    pub solid_scalar_stiffness: Csr,
}

pub fn assemble_forms(spaces: &FunctionSpaces, nu: f64) -> FormLibrary {
    let f = &spaces.fluid;
    let s = &spaces.solid;
    let pressure_mass = forms::pressure_mass(f);
    let pressure_mean = pressure_mass.matvec(&vec![1.0; f.n_vertices]);
    FormLibrary {
        nu,
        mass: forms::vector_mass(f),
        viscous: forms::viscous(f, nu),
        divergence: forms::divergence(f),
        pressure_mass,
        pressure_mean,
        scalar_mass: forms::scalar_mass(f),
        scalar_stiffness: forms::scalar_stiffness(f),
        scalar_mean: forms::scalar_integrals(f),
        gradient: forms::vector_gradient(f),
        boundary_flux: forms::boundary_flux(f, BoundaryTag::Interface),
        interface_mass: forms::boundary_vector_mass(f, BoundaryTag::Interface),
        solid_mass: forms::vector_mass(s),
        solid_strain: forms::viscous(s, 1.0),
        solid_scalar_mass: forms::scalar_mass(s),
        solid_scalar_stiffness: forms::scalar_stiffness(s),
    }
}

/// Random vector field vanishing on the boundary nodes of `tag` (or of all
/// boundaries when `tag` is `None`).
pub fn random_field(space: &P2Space, tag: Option<BoundaryTag>, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..2 * space.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for e in &space.boundary {
        if tag.is_none_or(|t| t == e.tag) {
            for &k in &e.nodes {
                v[2 * k] = 0.0;
                v[2 * k + 1] = 0.0;
            }
        }
    }
    v
}
