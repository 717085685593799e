use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::sparse::{dot, norm, Csr, Triplets};
use crate::error::{Error, Result};

pub const SOLVE_TOL: f64 = 1e-10;
const MAX_REFINE: usize = 6;

/// Sparse LU factorization with iterative refinement against the original
/// matrix.
pub struct SparseLu {
    matrix: Csr,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(matrix: Csr) -> Result<SparseLu> {
        if matrix.n_rows != matrix.n_cols {
            return Err(Error::SolverDivergence("matrix is not square".into()));
        }
        let trips: Vec<_> = matrix.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(matrix.n_rows, matrix.n_cols, &trips)
            .map_err(|e| Error::SolverDivergence(format!("{e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::SolverDivergence(format!("LU factorization failed: {e:?}")))?;
        Ok(SparseLu { matrix, lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }

    /// Solves A x = b to `SOLVE_TOL` relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_tol(b, SOLVE_TOL)
    }

    pub fn solve_tol(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.dim());
        let bn = norm(b);
        if bn == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.raw_solve(b);
        let mut rel = f64::INFINITY;
        for _ in 0..MAX_REFINE {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverDivergence("non-finite solution (singular matrix)".into()));
            }
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm(&r) / bn;
            if rel <= tol {
                return Ok(x);
            }
            let dx = self.raw_solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Err(Error::SolverDivergence(format!(
            "relative residual {rel:.3e} above {tol:.1e} after refinement"
        )))
    }
}

/// Factorized saddle-point system
///
/// ```text
/// [ A  B^T ] [u]   [f]
/// [ B  0   ] [p] = [g]
/// ```
///
/// When `B` has the constant pressure in its left kernel, pass the pressure
/// mean functional `m`: one pressure dof is pinned during the factorization
/// (a dense mean row would destroy the sparsity of the factors) and the
/// returned pressure is shifted to satisfy `m . p = 0`. For data with
/// `sum(g) = 0` this is the unique mean-free solution.
pub struct SaddleSolver {
    lu: SparseLu,
    n_u: usize,
    n_p: usize,
    pin: Option<(usize, Vec<f64>)>,
}

impl SaddleSolver {
    pub fn new(a: &Csr, b: &Csr, mean: Option<&[f64]>) -> Result<SaddleSolver> {
        let (n_u, n_p) = (a.n_rows, b.n_rows);
        assert_eq!(b.n_cols, n_u);
        let pin = mean.map(|m| {
            assert_eq!(m.len(), n_p);
            (0, m.to_vec())
        });
        let dropped = pin.as_ref().map(|p| p.0);
        let n = n_u + n_p - usize::from(dropped.is_some());
        let prow = |r: usize| -> Option<usize> {
            match dropped {
                Some(d) if r == d => None,
                Some(d) if r > d => Some(n_u + r - 1),
                _ => Some(n_u + r),
            }
        };
        let mut t = Triplets::new(n, n);
        t.add_block(a, 0, 0, 1.0);
        for (r, c, v) in b.iter() {
            if let Some(i) = prow(r) {
                t.push(i, c, v);
                t.push(c, i, v);
            }
        }
        Ok(SaddleSolver {
            lu: SparseLu::new(t.to_csr())?,
            n_u,
            n_p,
            pin,
        })
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// Returns (u, p).
    pub fn solve(&self, f: &[f64], g: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        assert_eq!(f.len(), self.n_u);
        let mut rhs = vec![0.0; self.lu.dim()];
        rhs[..self.n_u].copy_from_slice(f);
        if let Some(g) = g {
            let mut k = self.n_u;
            for (r, &gr) in g.iter().enumerate() {
                if self.pin.as_ref().is_some_and(|p| p.0 == r) {
                    continue;
                }
                rhs[k] = gr;
                k += 1;
            }
        }
        let mut x = self.lu.solve(&rhs)?;
        let mut p = x.split_off(self.n_u);
        if let Some((d, m)) = &self.pin {
            p.insert(*d, 0.0);
            let shift = dot(m, &p) / m.iter().sum::<f64>();
            p.iter_mut().for_each(|v| *v -= shift);
        }
        Ok((x, p))
    }
}
