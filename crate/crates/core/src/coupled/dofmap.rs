use crate::fem::FunctionSpaces;
use crate::linalg::{Csr, Triplets};

/// Fate of a fluid velocity dof in a reduced formulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Free(usize),
    /// Slaved to the rigid velocity (h'_1, h'_2, omega) with these weights.
    Rigid([f64; 3]),
    /// Prescribed by a separate datum (zero in the homogeneous problem).
    Fixed,
}

/// Maps a reduced state `x` to full fluid velocity dofs: `u = T x (+ datum)`.
///
/// The reduced state lists the free fluid dofs first, followed by
/// (h'_1, h'_2, omega) when the map is rigid-coupled.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub targets: Vec<Target>,
    pub n_free: usize,
    pub rigid: bool,
    pub t: Csr,
}

impl DofMap {
    fn build(spaces: &FunctionSpaces, rigid: bool) -> DofMap {
        let n = spaces.n_velocity();
        let mut targets = vec![Target::Fixed; n];
        let mut on_boundary = vec![false; spaces.fluid.n_nodes()];
        for &k in spaces.interface_nodes.iter().chain(&spaces.outer_nodes) {
            on_boundary[k] = true;
        }
        let mut n_free = 0;
        for node in 0..spaces.fluid.n_nodes() {
            if !on_boundary[node] {
                for c in 0..2 {
                    targets[2 * node + c] = Target::Free(n_free);
                    n_free += 1;
                }
            }
        }
        if rigid {
            for &k in &spaces.interface_nodes {
                let y = spaces.fluid.nodes[k];
                targets[2 * k] = Target::Rigid([1.0, 0.0, -y[1]]);
                targets[2 * k + 1] = Target::Rigid([0.0, 1.0, y[0]]);
            }
        }
        let n_x = n_free + if rigid { 3 } else { 0 };
        let mut t = Triplets::new(n, n_x);
        for (i, tg) in targets.iter().enumerate() {
            match *tg {
                Target::Free(j) => t.push(i, j, 1.0),
                Target::Rigid(w) => {
                    for (r, &wr) in w.iter().enumerate() {
                        if wr != 0.0 {
                            t.push(i, n_free + r, wr);
                        }
                    }
                }
                Target::Fixed => {}
            }
        }
        DofMap {
            targets,
            n_free,
            rigid,
            t: t.to_csr(),
        }
    }

    /// Interior dofs free, interface slaved to the rigid motion, wall fixed.
    pub fn coupled(spaces: &FunctionSpaces) -> DofMap {
        Self::build(spaces, true)
    }

    /// Interior dofs free, every boundary dof prescribed.
    pub fn dirichlet(spaces: &FunctionSpaces) -> DofMap {
        Self::build(spaces, false)
    }

    pub fn n_x(&self) -> usize {
        self.t.n_cols
    }

    pub fn rigid_offset(&self) -> usize {
        self.n_free
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.t.matvec(x)
    }

    /// T^T v
    pub fn pullback(&self, v: &[f64]) -> Vec<f64> {
        self.t.tmatvec(v)
    }

    /// T^T A T
    pub fn reduce(&self, a: &Csr) -> Csr {
        let mut out = Triplets::new(self.n_x(), self.n_x());
        for (r, c, v) in a.iter() {
            for k in tt_row(&self.t, r) {
                for l in tt_row(&self.t, c) {
                    out.push(k.0, l.0, k.1 * v * l.1);
                }
            }
        }
        out.to_csr()
    }

    /// B T
    pub fn reduce_cols(&self, b: &Csr) -> Csr {
        let mut out = Triplets::new(b.n_rows, self.n_x());
        for (r, c, v) in b.iter() {
            for l in tt_row(&self.t, c) {
                out.push(r, l.0, v * l.1);
            }
        }
        out.to_csr()
    }

    /// Full-length vector that is zero except at `Fixed` dofs, where it
    /// copies `datum`.
    pub fn fixed_part(&self, datum: &[f64]) -> Vec<f64> {
        self.targets
            .iter()
            .zip(datum)
            .map(|(t, &d)| if *t == Target::Fixed { d } else { 0.0 })
            .collect()
    }
}

fn tt_row(t: &Csr, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    (t.row_ptr[r]..t.row_ptr[r + 1]).map(move |k| (t.col_idx[k], t.values[k]))
}
