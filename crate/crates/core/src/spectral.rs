//! Coupled spectrum by shift-invert Arnoldi, the spectral split about -lambda
//! and the unstable projector.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupled::{BlockSystem, DofMap};
use crate::error::{Error, Result};
use crate::linalg::{arnoldi, dot, Csr, SaddleSolver};

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const CLUSTER_TOL: f64 = 1e-6;
const MAX_STEPS: usize = 600;

/// Symmetric pencil K v = kappa M v restricted to ker B.
/// Eigenvalues of the generator are mu = -kappa.
pub struct Pencil<'a> {
    pub k: &'a Csr,
    pub m: &'a Csr,
    pub b: &'a Csr,
    /// Pressure mean row (the constant pressure lies in ker B^T).
    pub mean: &'a [f64],
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralDecomposition {
    /// mu_1 >= mu_2 >= ... (all negative).
    pub eigenvalues: Vec<f64>,
    /// Mc-orthonormal reduced states.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    /// ||M^{-1} A v - mu v||_M / (|mu| ||v||_M).
    pub residuals: Vec<f64>,
    /// Largest |Im mu| among the Ritz values of the unsymmetrized projection.
    pub max_imag: f64,
    pub shift: f64,
    pub krylov_steps: usize,
}

impl SpectralDecomposition {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue,residual\n");
        for (i, (mu, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            let _ = writeln!(s, "{},{:.15e},{:.6e}", i + 1, mu, r);
        }
        s
    }

    /// Groups of indices whose eigenvalues agree within `CLUSTER_TOL`.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        cluster(&self.eigenvalues)
    }
}

fn cluster(values: &[f64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (values[c[0]] - v).abs() <= CLUSTER_TOL * v.abs().max(values[c[0]].abs()) => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Eigenpairs of the coupled system nearest to `shift` (in generator units).
pub fn solve_eigs(blocks: &BlockSystem, count: usize, shift: f64) -> Result<SpectralDecomposition> {
    let pencil = Pencil {
        k: &blocks.kc,
        m: &blocks.mc,
        b: &blocks.bc,
        mean: &blocks.forms.pressure_mean,
    };
    let mass = blocks.mass_saddle()?;
    pencil_eigs(&pencil, Some(mass), count, shift)
}

/// Leading eigenvalues of the Stokes problem with the interface held fixed.
pub fn dirichlet_stokes_eigs(blocks: &BlockSystem, count: usize) -> Result<Vec<f64>> {
    let map = DofMap::dirichlet(&blocks.spaces);
    let k = map.reduce(&blocks.forms.viscous);
    let m = map.reduce(&blocks.forms.mass);
    let b = map.reduce_cols(&blocks.forms.divergence);
    let pencil = Pencil {
        k: &k,
        m: &m,
        b: &b,
        mean: &blocks.forms.pressure_mean,
    };
    Ok(pencil_eigs(&pencil, None, count, 0.0)?.eigenvalues)
}

pub fn pencil_eigs(
    pencil: &Pencil,
    mass: Option<&SaddleSolver>,
    count: usize,
    shift: f64,
) -> Result<SpectralDecomposition> {
    if count == 0 {
        return Err(Error::InvalidInput("eigenvalue count must be positive".into()));
    }
    let n = pencil.m.n_rows;
    // kappa-shift s = -shift; factor K - s M = K + shift M
    let shifted = Csr::axpby(1.0, pencil.k, shift, pencil.m);
    let on_spectrum = |_| Error::ShiftOnSpectrum { shift };
    let solver = SaddleSolver::new(&shifted, pencil.b, Some(pencil.mean)).map_err(on_spectrum)?;
    let own_mass;
    let mass = match mass {
        Some(m) => m,
        None => {
            own_mass = SaddleSolver::new(pencil.m, pencil.b, Some(pencil.mean))?;
            &own_mass
        }
    };
    let mut op = |v: &[f64]| -> Result<Vec<f64>> {
        let f = pencil.m.matvec(v);
        Ok(solver.solve(&f, None).map_err(on_spectrum)?.0)
    };
    let metric = |v: &[f64]| pencil.m.matvec(v);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let start = op(&raw)?;

    let mut steps = (2 * count + 30).min(n);
    loop {
        let kr = arnoldi(&mut op, &metric, &start, steps)?;
        let k = kr.basis.len();
        let want = count.min(k);
        let sym = (&kr.h + kr.h.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        // largest theta = 1 / (shift - mu) first
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
        let complex = kr.h.complex_eigenvalues();
        let mut thetas: Vec<_> = complex.iter().copied().collect();
        thetas.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        let max_imag = thetas
            .iter()
            .take(want)
            .map(|t| (t.im / t.norm_sqr()).abs())
            .fold(0.0, f64::max);

        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(want);
        for &j in order.iter().take(want) {
            let theta = eig.eigenvalues[j];
            let y = eig.eigenvectors.column(j);
            let mut v = vec![0.0; n];
            for (c, b) in y.iter().zip(&kr.basis) {
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi += c * bi;
                }
            }
            let mu = shift - 1.0 / theta;
            pairs.push((mu, v));
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        for &mu in &eigenvalues {
            if (mu - shift).abs() <= 1e-8 * mu.abs() {
                return Err(Error::ShiftOnSpectrum { shift });
            }
        }
        let mut eigenvectors: Vec<Vec<f64>> = pairs.into_iter().map(|p| p.1).collect();
        for c in cluster(&eigenvalues) {
            if c.len() > 1 {
                orthonormalize(&mut eigenvectors, &c, pencil.m);
            }
        }
        let residuals = eigenvectors
            .iter()
            .zip(&eigenvalues)
            .map(|(v, &mu)| pair_residual(pencil, mass, v, mu))
            .collect::<Result<Vec<f64>>>()?;
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        let exhausted = kr.residual_norm == 0.0 || steps >= n;
        if (worst <= RESIDUAL_TOL && want == count) || exhausted {
            if want < count {
                return Err(Error::NonConvergence(format!(
                    "only {want} eigenpairs exist in the constrained space"
                )));
            }
            if worst > RESIDUAL_TOL {
                return Err(Error::NonConvergence(format!("residual {worst:.3e}")));
            }
            return Ok(SpectralDecomposition {
                eigenvalues,
                eigenvectors,
                residuals,
                max_imag,
                shift,
                krylov_steps: k,
            });
        }
        if steps >= MAX_STEPS {
            return Err(Error::NonConvergence(format!(
                "residual {worst:.3e} after {steps} Krylov steps"
            )));
        }
        steps = (steps * 3 / 2).min(MAX_STEPS).min(n);
    }
}

/// Modified Gram-Schmidt in the M inner product over a cluster.
fn orthonormalize(vs: &mut [Vec<f64>], idx: &[usize], m: &Csr) {
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[..a] {
            let c = m.bilinear(&vs[j], &vs[i]);
            let vj = vs[j].clone();
            for (x, y) in vs[i].iter_mut().zip(&vj) {
                *x -= c * y;
            }
        }
        let nrm = m.bilinear(&vs[i], &vs[i]).sqrt();
        vs[i].iter_mut().for_each(|x| *x /= nrm);
    }
}

fn pair_residual(p: &Pencil, mass: &SaddleSolver, v: &[f64], mu: f64) -> Result<f64> {
    // M y = -K v - mu M v on ker B
    let kv = p.k.matvec(v);
    let mv = p.m.matvec(v);
    let r: Vec<f64> = kv.iter().zip(&mv).map(|(k, m)| -k - mu * m).collect();
    let y = mass.solve(&r, None)?.0;
    let ny = p.m.bilinear(&y, &y).max(0.0).sqrt();
    let nv = dot(v, &mv).sqrt();
    Ok(ny / (mu.abs() * nv))
}

/// Brute-force reference: dense null-space reduction of the pencil.
pub fn dense_eigs(pencil: &Pencil, count: usize) -> Vec<f64> {
    let b = pencil.b.to_dense();
    let btb = b.transpose() * &b;
    let n = btb.nrows();
    let eig = btb.symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let null: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] <= 1e-10 * scale)
        .collect();
    let z = DMatrix::from_fn(n, null.len(), |r, c| eig.eigenvectors[(r, null[c])]);
    let kz = z.transpose() * pencil.k.to_dense() * &z;
    let mz = z.transpose() * pencil.m.to_dense() * &z;
    let l = mz.cholesky().expect("mass is SPD on the constrained space").l();
    let li = l.clone().try_inverse().expect("Cholesky factor is invertible");
    let c = &li * kz * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut kappa: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    kappa.sort_by(f64::total_cmp);
    kappa.iter().take(count).map(|k| -k).collect()
}

/// The unstable modes (mu_i > -lambda) and their M-orthogonal projector.
#[derive(Clone, Debug)]
pub struct UnstableSubspace {
    pub lambda: f64,
    pub eigenvalues: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl UnstableSubspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Modal coordinates v_i^T Mc x.
    pub fn coordinates(&self, mc: &Csr, x: &[f64]) -> Vec<f64> {
        let mx = mc.matvec(x);
        self.basis.iter().map(|v| dot(v, &mx)).collect()
    }

    /// P_u x = sum_i v_i (v_i^T Mc x).
    pub fn project(&self, mc: &Csr, x: &[f64]) -> Vec<f64> {
        let c = self.coordinates(mc, x);
        let mut out = vec![0.0; x.len()];
        for (ci, v) in c.iter().zip(&self.basis) {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += ci * vi;
            }
        }
        out
    }

    /// Diagonal of A_u in modal coordinates.
    pub fn generator(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.eigenvalues.clone()))
    }
}

/// Splits the computed spectrum at -lambda.
pub fn split_spectrum(decomp: &SpectralDecomposition, lambda: f64) -> Result<UnstableSubspace> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "decay rate must be positive, got {lambda}"
        )));
    }
    for &mu in &decomp.eigenvalues {
        if (mu + lambda).abs() <= CLUSTER_TOL * lambda.max(mu.abs()) {
            return Err(Error::LambdaOnSpectrum { lambda });
        }
    }
    let lowest = decomp.eigenvalues.last().copied().unwrap_or(0.0);
    if lowest > -lambda {
        return Err(Error::InsufficientSpectrum { lambda, lowest });
    }
    let idx: Vec<usize> = (0..decomp.eigenvalues.len())
        .filter(|&i| decomp.eigenvalues[i] > -lambda)
        .collect();
    Ok(UnstableSubspace {
        lambda,
        eigenvalues: idx.iter().map(|&i| decomp.eigenvalues[i]).collect(),
        basis: idx.iter().map(|&i| decomp.eigenvectors[i].clone()).collect(),
    })
}
