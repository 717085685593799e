use crate::error::Result;
use crate::fem::{forms, FormLibrary, FunctionSpaces};
use crate::geometry::BoundaryTag;
use crate::linalg::{dot, Csr, SparseLu, Triplets};

/// Rigid velocity datum (h', omega).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidDatum {
    pub h: [f64; 2],
    pub omega: f64,
}

impl RigidDatum {
    pub fn new(h: [f64; 2], omega: f64) -> Self {
        RigidDatum { h, omega }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        RigidDatum {
            h: [v[0], v[1]],
            omega: v[2],
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.h[0], self.h[1], self.omega]
    }

    /// The three rigid generators e1, e2 and the unit rotation.
    pub fn generators() -> [RigidDatum; 3] {
        [
            RigidDatum::new([1.0, 0.0], 0.0),
            RigidDatum::new([0.0, 1.0], 0.0),
            RigidDatum::new([0.0, 0.0], 1.0),
        ]
    }
}

/// Zero-mean potential with prescribed normal derivative on the interface.
#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub potential: Vec<f64>,
    /// (int q n_1, int q n_2, int q (y ^ n)) over the interface.
    pub gradient_flux: [f64; 3],
}

/// Factorized pure-Neumann Laplacian. The constant is removed by pinning one
/// node, after projecting the load onto compatible data; the result is then
/// shifted to zero mean, which reproduces the zero-mean multiplier solution.
pub struct NeumannSolver {
    lu: SparseLu,
    mean: Vec<f64>,
    stiffness: Csr,
}

impl NeumannSolver {
    pub fn new(forms: &FormLibrary) -> Result<NeumannSolver> {
        let s = &forms.scalar_stiffness;
        let mut t = Triplets::new(s.n_rows, s.n_cols);
        for (r, c, v) in s.iter() {
            if r != 0 && c != 0 {
                t.push(r, c, v);
            }
        }
        t.push(0, 0, 1.0);
        Ok(NeumannSolver {
            lu: SparseLu::new(t.to_csr())?,
            mean: forms.scalar_mean.clone(),
            stiffness: s.clone(),
        })
    }

    /// Solves (grad q, grad phi) = load(phi) with zero mean.
    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        let area: f64 = self.mean.iter().sum();
        let defect = load.iter().sum::<f64>() / area;
        let mut rhs: Vec<f64> = load.iter().zip(&self.mean).map(|(l, m)| l - defect * m).collect();
        rhs[0] = 0.0;
        let mut q = self.lu.solve(&rhs)?;
        let avg = dot(&q, &self.mean) / area;
        q.iter_mut().for_each(|v| *v -= avg);
        Ok(q)
    }

    pub fn energy(&self, a: &[f64], b: &[f64]) -> f64 {
        self.stiffness.bilinear(a, b)
    }
}

/// Load vector of int_{interface} ((h' + omega ^ y) . n) phi ds.
pub fn rigid_neumann_load(spaces: &FunctionSpaces, datum: RigidDatum) -> Vec<f64> {
    forms::boundary_load(&spaces.fluid, BoundaryTag::Interface, |y, n| {
        let v = [datum.h[0] - datum.omega * y[1], datum.h[1] + datum.omega * y[0]];
        v[0] * n[0] + v[1] * n[1]
    })
}

/// Boundary integrals (int q n_1, int q n_2, int q (y ^ n)).
pub fn interface_moments(spaces: &FunctionSpaces, q: &[f64]) -> [f64; 3] {
    let f = &spaces.fluid;
    let l1 = forms::boundary_load(f, BoundaryTag::Interface, |_, n| n[0]);
    let l2 = forms::boundary_load(f, BoundaryTag::Interface, |_, n| n[1]);
    let l3 = forms::boundary_load(f, BoundaryTag::Interface, |y, n| y[0] * n[1] - y[1] * n[0]);
    [dot(q, &l1), dot(q, &l2), dot(q, &l3)]
}

/// N(h') + N^(omega): the potential flow generated by a rigid motion.
pub fn solve_neumann(spaces: &FunctionSpaces, solver: &NeumannSolver, datum: RigidDatum) -> Result<NeumannSolution> {
    let potential = solver.solve(&rigid_neumann_load(spaces, datum))?;
    let gradient_flux = interface_moments(spaces, &potential);
    Ok(NeumannSolution {
        potential,
        gradient_flux,
    })
}
