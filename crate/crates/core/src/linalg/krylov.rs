use nalgebra::DMatrix;

use super::sparse::dot;
use crate::error::Result;

/// Orthonormal Krylov basis and the projected operator.
pub struct Krylov {
    pub basis: Vec<Vec<f64>>,
    /// `h[(i, j)] = <v_i, Op v_j>`, square of size `basis.len()`.
    pub h: DMatrix<f64>,
    /// Norm of the part of `Op v_last` outside the basis (`Op V = V H + r e_k^T`).
    pub residual_norm: f64,
}

/// Arnoldi iteration in the inner product `<a, b> = a . metric(b)` with two
/// passes of classical Gram-Schmidt. Stops early on an invariant subspace.
pub fn arnoldi(
    op: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    metric: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    steps: usize,
) -> Result<Krylov> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut weighted: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let ms = metric(start);
    let nrm = dot(start, &ms).sqrt();
    basis.push(start.iter().map(|x| x / nrm).collect());
    weighted.push(ms.iter().map(|x| x / nrm).collect());
    let mut h = DMatrix::zeros(steps, steps);
    let mut residual_norm = 0.0;
    for j in 0..steps {
        let mut w = op(&basis[j])?;
        let wn0 = dot(&w, &metric(&w)).sqrt();
        for _pass in 0..2 {
            let coeffs: Vec<f64> = weighted.iter().map(|mv| dot(mv, &w)).collect();
            for (i, (c, v)) in coeffs.iter().zip(&basis).enumerate() {
                h[(i, j)] += c;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= c * vk;
                }
            }
        }
        let mw = metric(&w);
        let beta = dot(&w, &mw).max(0.0).sqrt();
        residual_norm = beta;
        if beta <= 1e-13 * wn0 {
            residual_norm = 0.0;
            break;
        }
        if j + 1 == steps {
            break;
        }
        h[(j + 1, j)] = beta;
        basis.push(w.iter().map(|x| x / beta).collect());
        weighted.push(mw.iter().map(|x| x / beta).collect());
    }
    let k = basis.len();
    Ok(Krylov {
        basis,
        h: h.view((0, 0), (k, k)).into_owned(),
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_diagonal_spectrum() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let dd = d.clone();
        let mut op = move |v: &[f64]| -> Result<Vec<f64>> { Ok(v.iter().zip(&dd).map(|(a, b)| a * b).collect()) };
        let metric = |a: &[f64]| a.to_vec();
        let k = arnoldi(&mut op, &metric, &[1.0; 20], 20).unwrap();
        let sym = (&k.h + k.h.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&d) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
