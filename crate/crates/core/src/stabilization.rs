//! Boundary control basis, the control injection, projected controllability
//! and the Riccati feedback on the unstable modes.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::coupled::{lift_stokes, BlockSystem, InterfaceField};
use crate::error::{Error, Result};
use crate::linalg::{dot, Csr, SaddleSolver};
use crate::spectral::UnstableSubspace;

/// Flux allowed on a control mode, relative to its L2 norm.
pub const MODE_FLUX_TOL: f64 = 1e-10;
pub const GRAM_COND_MAX: f64 = 1e6;
pub const RICCATI_TOL: f64 = 1e-8;
pub const DEFAULT_MODES: usize = 6;
/// Relative threshold of the numerical Kalman rank. Directions reached
/// below this level (e.g. a symmetry-degenerate pair split only by mesh
/// asymmetry) count as uncontrollable.
pub const RANK_TOL: f64 = 1e-3;

/// A finite family of flux-free interface velocities and their Stokes liftings.
#[derive(Clone, Debug)]
pub struct ControlBasis {
    pub modes: Vec<InterfaceField>,
    pub labels: Vec<String>,
    /// Full fluid vectors L xi_j.
    pub liftings: Vec<Vec<f64>>,
}

impl ControlBasis {
    /// Validates the modes (flux, independence) and lifts them.
    pub fn from_modes(blocks: &BlockSystem, modes: Vec<InterfaceField>, labels: Vec<String>) -> Result<ControlBasis> {
        let (spaces, forms) = (&blocks.spaces, &blocks.forms);
        for m in &modes {
            let flux = m.flux(spaces, forms);
            let tol = MODE_FLUX_TOL * m.l2_norm(spaces, forms);
            if flux.abs() > tol {
                return Err(Error::FluxViolation { flux, tol });
            }
        }
        let basis = ControlBasis {
            liftings: Vec::new(),
            modes,
            labels,
        };
        let cond = basis.gram_condition(blocks);
        if !(cond <= GRAM_COND_MAX) {
            return Err(Error::InvalidInput(format!(
                "control modes are nearly dependent (Gram condition {cond:.3e})"
            )));
        }
        let liftings = basis
            .modes
            .iter()
            .map(|m| lift_stokes(spaces, forms, &blocks.lifter, m).map(|l| l.velocity))
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlBasis { liftings, ..basis })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// L2(dS) Gram matrix of the modes.
    pub fn gram(&self, blocks: &BlockSystem) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| {
            self.modes[i].inner(&self.modes[j], &blocks.spaces, &blocks.forms)
        })
    }

    pub fn gram_condition(&self, blocks: &BlockSystem) -> f64 {
        if self.dim() == 0 {
            return 1.0;
        }
        let ev = self.gram(blocks).symmetric_eigenvalues();
        ev.max() / ev.min()
    }

    /// Interface datum sum_j c_j xi_j.
    pub fn datum(&self, c: &[f64]) -> InterfaceField {
        let mut out = InterfaceField {
            values: vec![[0.0; 2]; self.modes.first().map_or(0, |m| m.values.len())],
        };
        for (cj, m) in c.iter().zip(&self.modes) {
            out.axpy(*cj, m);
        }
        out
    }

    /// Fluid field sum_j c_j L xi_j.
    pub fn lift(&self, c: &[f64], n_velocity: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_velocity];
        for (cj, l) in c.iter().zip(&self.liftings) {
            for (o, v) in out.iter_mut().zip(l) {
                *o += cj * v;
            }
        }
        out
    }

    /// Basis spanned by the columns of `w` (m x k) over this one.
    pub fn combine(&self, w: &DMatrix<f64>, label: &str) -> ControlBasis {
        let n_velocity = self.liftings.first().map_or(0, Vec::len);
        let mut out = ControlBasis {
            modes: Vec::new(),
            labels: Vec::new(),
            liftings: Vec::new(),
        };
        for k in 0..w.ncols() {
            let c: Vec<f64> = w.column(k).iter().copied().collect();
            out.modes.push(self.datum(&c));
            out.liftings.push(self.lift(&c, n_velocity));
            out.labels.push(format!("{label} {}", k + 1));
        }
        out
    }
}

/// Label, whether the field is normal, and the angular profile.
type FamilyMember = (&'static str, bool, fn(f64) -> f64);

/// The trigonometric family: tau, then for k = 1, 2, ... the fields
/// n cos k theta, n sin k theta, tau cos k theta, tau sin k theta, each made
/// exactly flux free and normalized in L2(dS). The normal k = 0 mode carries
/// net flux and is never part of the family.
pub fn build_control_basis(blocks: &BlockSystem, m: usize) -> Result<ControlBasis> {
    if m == 0 {
        return Err(Error::InvalidInput("control dimension must be at least 1".into()));
    }
    let (spaces, forms) = (&blocks.spaces, &blocks.forms);
    let c = blocks.rigid.centroid;
    let angle = move |y: [f64; 2]| (y[1] - c[1]).atan2(y[0] - c[0]);
    let normal = InterfaceField::from_fn(spaces, |_, n, _| n);
    let normal_flux = normal.flux(spaces, forms);
    let mut raw = vec![(
        InterfaceField::from_fn(spaces, |_, _, t| t),
        "tangential k=0".to_string(),
    )];
    let mut k = 1;
    while raw.len() < m {
        let kf = k as f64;
        let family: [FamilyMember; 4] = [
            ("normal cos", true, f64::cos),
            ("normal sin", true, f64::sin),
            ("tangential cos", false, f64::cos),
            ("tangential sin", false, f64::sin),
        ];
        for (name, is_normal, trig) in family {
            let f = InterfaceField::from_fn(spaces, |y, n, t| {
                let s = trig(kf * angle(y));
                let d = if is_normal { n } else { t };
                [s * d[0], s * d[1]]
            });
            raw.push((f, format!("{name} k={k}")));
        }
        k += 1;
    }
    raw.truncate(m);
    let (mut modes, labels): (Vec<_>, Vec<_>) = raw.into_iter().unzip();
    for f in &mut modes {
        let flux = f.flux(spaces, forms);
        f.axpy(-flux / normal_flux, &normal);
        let nrm = f.l2_norm(spaces, forms);
        f.scale(1.0 / nrm);
    }
    ControlBasis::from_modes(blocks, modes, labels)
}

/// Columns of the control injection B_lambda = (lambda T^T Mf - T^T Kf) L.
#[derive(Clone, Debug)]
pub struct ControlInjection {
    pub lambda: f64,
    pub columns: Vec<Vec<f64>>,
    /// T^T Mf L xi_j
    pub mass_part: Vec<Vec<f64>>,
    /// T^T Kf L xi_j
    pub stiffness_part: Vec<Vec<f64>>,
}

pub fn assemble_b(basis: &ControlBasis, blocks: &BlockSystem, lambda: f64) -> ControlInjection {
    let mut inj = ControlInjection {
        lambda,
        columns: Vec::new(),
        mass_part: Vec::new(),
        stiffness_part: Vec::new(),
    };
    for l in &basis.liftings {
        let m = blocks.dofs.pullback(&blocks.forms.mass.matvec(l));
        let k = blocks.dofs.pullback(&blocks.forms.viscous.matvec(l));
        inj.columns
            .push(m.iter().zip(&k).map(|(a, b)| lambda * a - b).collect());
        inj.mass_part.push(m);
        inj.stiffness_part.push(k);
    }
    inj
}

/// Steady state of the lambda-shifted system under a constant control:
/// (Kc - lambda Mc) x + Bc^T p = B_lambda c, returned as the full fluid
/// velocity T x + L c followed by the rigid velocity.
pub fn steady_response(
    blocks: &BlockSystem,
    basis: &ControlBasis,
    inj: &ControlInjection,
    c: &[f64],
) -> Result<(Vec<f64>, [f64; 3])> {
    let mut rhs = vec![0.0; blocks.n_x()];
    for (cj, col) in c.iter().zip(&inj.columns) {
        rhs.iter_mut().zip(col).for_each(|(r, v)| *r += cj * v);
    }
    let a = Csr::axpby(1.0, &blocks.kc, -inj.lambda, &blocks.mc);
    let saddle = SaddleSolver::new(&a, &blocks.bc, Some(&blocks.forms.pressure_mean))
        .map_err(|_| Error::LambdaOnSpectrum { lambda: inj.lambda })?;
    let x = saddle.solve(&rhs, None)?.0;
    let mut u = blocks.fluid_velocity(&x);
    let l = basis.lift(c, u.len());
    u.iter_mut().zip(&l).for_each(|(a, b)| *a += b);
    let r = blocks.rigid_part(&x);
    Ok((u, [r[0], r[1], r[2]]))
}

/// The same steady state computed without liftings: the interface datum is
/// imposed directly as a nonhomogeneous Dirichlet condition.
pub fn steady_response_direct(
    blocks: &BlockSystem,
    datum: &InterfaceField,
    lambda: f64,
) -> Result<(Vec<f64>, [f64; 3])> {
    let d = datum.to_fluid(&blocks.spaces);
    let forms = &blocks.forms;
    let shifted = Csr::axpby(1.0, &forms.viscous, -lambda, &forms.mass);
    let rhs: Vec<f64> = blocks.dofs.pullback(&shifted.matvec(&d)).iter().map(|v| -v).collect();
    let g: Vec<f64> = forms.divergence.matvec(&d).iter().map(|v| -v).collect();
    let a = Csr::axpby(1.0, &blocks.kc, -lambda, &blocks.mc);
    let saddle = SaddleSolver::new(&a, &blocks.bc, Some(&forms.pressure_mean))
        .map_err(|_| Error::LambdaOnSpectrum { lambda })?;
    let x = saddle.solve(&rhs, Some(&g))?.0;
    let mut u = blocks.fluid_velocity(&x);
    u.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
    let r = blocks.rigid_part(&x);
    Ok((u, [r[0], r[1], r[2]]))
}

/// The control system on the unstable modes, in the coordinates
/// z_i = v_i^T (Mc x + T^T Mf L c) of the full state:
/// z' = A_u z + B_u c with A_u = diag(mu_i).
#[derive(Clone, Debug)]
pub struct ModalSystem {
    pub lambda: f64,
    pub a_u: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    /// v_i^T T^T Mf L xi_j, the lifting contribution to z.
    pub coupling: DMatrix<f64>,
    /// Size of the terms that make up B_u, the reference for its rank.
    pub input_scale: f64,
}

impl ModalSystem {
    pub fn n(&self) -> usize {
        self.a_u.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_u.ncols()
    }

    /// A_u + lambda I
    pub fn shifted_generator(&self) -> DMatrix<f64> {
        &self.a_u + DMatrix::identity(self.n(), self.n()) * self.lambda
    }

    /// Modal coordinates of the state (x, c).
    pub fn coordinates(&self, unstable: &UnstableSubspace, mc: &Csr, x: &[f64], c: &[f64]) -> Vec<f64> {
        let mut z = unstable.coordinates(mc, x);
        for (i, zi) in z.iter_mut().enumerate() {
            for (j, cj) in c.iter().enumerate() {
                *zi += self.coupling[(i, j)] * cj;
            }
        }
        z
    }
}

/// Projects the controlled dynamics onto the unstable subspace.
pub fn project_control(unstable: &UnstableSubspace, inj: &ControlInjection) -> ModalSystem {
    let (n, m) = (unstable.dim(), inj.columns.len());
    let coupling = DMatrix::from_fn(n, m, |i, j| dot(&unstable.basis[i], &inj.mass_part[j]));
    let stiffness = DMatrix::from_fn(n, m, |i, j| dot(&unstable.basis[i], &inj.stiffness_part[j]));
    let kappa = DMatrix::from_fn(n, m, |i, j| -unstable.eigenvalues[i] * coupling[(i, j)]);
    let b_u = &kappa - &stiffness;
    let input_scale = (kappa.abs() + stiffness.abs()).norm();
    ModalSystem {
        lambda: unstable.lambda,
        a_u: unstable.generator(),
        b_u,
        coupling,
        input_scale,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub controllable: bool,
}

/// Rank of [B, AB, ..., A^{N-1} B], computed as the dimension of the
/// block Krylov space with orthogonalization at every step.
pub fn kalman_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    kalman_rank_scaled(a, b, b.norm())
}

/// As `kalman_rank`, with input directions measured against `scale_b`.
pub fn kalman_rank_scaled(a: &DMatrix<f64>, b: &DMatrix<f64>, scale_b: f64) -> usize {
    let n = a.nrows();
    if n == 0 {
        return 0;
    }
    let scale_a = a.norm().max(f64::MIN_POSITIVE);
    if scale_b == 0.0 {
        return 0;
    }
    let mut q: Vec<DVector<f64>> = Vec::new();
    let admit = |v: DVector<f64>, scale: f64, q: &mut Vec<DVector<f64>>| -> bool {
        let mut v = v;
        for _ in 0..2 {
            for qi in q.iter() {
                let c = qi.dot(&v);
                v.axpy(-c, qi, 1.0);
            }
        }
        let nv = v.norm();
        if nv > RANK_TOL * scale && q.len() < n {
            q.push(v / nv);
            true
        } else {
            false
        }
    };
    let mut frontier: Vec<DVector<f64>> = Vec::new();
    for j in 0..b.ncols() {
        let before = q.len();
        if admit(b.column(j).into_owned(), scale_b, &mut q) {
            frontier.push(q[before].clone());
        }
    }
    while !frontier.is_empty() && q.len() < n {
        let mut next = Vec::new();
        for f in &frontier {
            let before = q.len();
            if admit(a * f, scale_a, &mut q) {
                next.push(q[before].clone());
            }
        }
        frontier = next;
    }
    q.len()
}

pub fn project_and_check_controllability(sys: &ModalSystem) -> RankReport {
    let rank = kalman_rank_scaled(&sys.a_u, &sys.b_u, sys.input_scale);
    RankReport {
        n: sys.n(),
        m: sys.m(),
        rank,
        controllable: rank == sys.n(),
    }
}

/// Controls in span(basis) that are invisible to every unstable mode: the
/// combinations annihilated by each row of B_u (the adjoint boundary
/// tractions of the modes, tested against the liftings).
pub fn obstruction_basis(basis: &ControlBasis, sys: &ModalSystem) -> ControlBasis {
    let m = sys.m();
    let b = &sys.b_u;
    // null space of B_u via the eigenvectors of B_u^T B_u
    let btb = b.transpose() * b;
    let eig = btb.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] <= 1e-16 * top).collect();
    let w = DMatrix::from_fn(m, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    basis.combine(&w, "obstructed")
}

/// Riccati solution, feedback and closed-loop poles on the unstable modes.
#[derive(Clone, Debug)]
pub struct FeedbackGain {
    pub lambda: f64,
    pub riccati_solution: DMatrix<f64>,
    /// K = -B_u^T Pi (m x N), acting on modal coordinates.
    pub gain: DMatrix<f64>,
    /// Eigenvalues (re, im) of A_u + B_u K.
    pub closed_loop_poles: Vec<[f64; 2]>,
    pub riccati_residual: f64,
}

impl FeedbackGain {
    pub fn n(&self) -> usize {
        self.gain.ncols()
    }

    pub fn m(&self) -> usize {
        self.gain.nrows()
    }

    /// Control coefficients c = K z.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.m())
            .map(|i| (0..self.n()).map(|j| self.gain[(i, j)] * z[j]).sum())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = self.gain.row_iter().map(|r| r.iter().copied().collect()).collect();
        serde_json::json!({
            "lambda": self.lambda,
            "N": self.n(),
            "m": self.m(),
            "riccati_residual": self.riccati_residual,
            "closed_loop_poles": self.closed_loop_poles,
            "gain_matrix": rows,
        })
    }
}

/// Residual Pi As + As^T Pi - Pi B B^T Pi + I in the Frobenius norm.
pub fn riccati_residual(a_s: &DMatrix<f64>, b: &DMatrix<f64>, pi: &DMatrix<f64>) -> f64 {
    let n = a_s.nrows();
    let r = pi * a_s + a_s.transpose() * pi - pi * b * b.transpose() * pi + DMatrix::identity(n, n);
    r.norm()
}

/// Solves Pi As + As^T Pi - Pi B B^T Pi + I = 0 with As = A_u + lambda I for
/// the stabilizing solution, and forms K = -B^T Pi.
pub fn solve_riccati(a_u: &DMatrix<f64>, b_u: &DMatrix<f64>, lambda: f64) -> Result<FeedbackGain> {
    let n = a_u.nrows();
    let m = b_u.ncols();
    if n == 0 {
        return Ok(FeedbackGain {
            lambda,
            riccati_solution: DMatrix::zeros(0, 0),
            gain: DMatrix::zeros(m, 0),
            closed_loop_poles: Vec::new(),
            riccati_residual: 0.0,
        });
    }
    let rank = kalman_rank(a_u, b_u);
    if rank < n {
        return Err(Error::RiccatiNoSolution(format!(
            "projected system is not controllable (rank {rank} < {n})"
        )));
    }
    let a_s = a_u + DMatrix::identity(n, n) * lambda;
    let g = b_u * b_u.transpose();
    let mut pi = hamiltonian_sign_solution(&a_s, &g)?;
    // Newton-Kleinman polishing
    for _ in 0..4 {
        let ak = &a_s - &g * &pi;
        let rhs = -(DMatrix::identity(n, n) + &pi * &g * &pi);
        let next = lyapunov(&ak, &rhs).ok_or_else(|| Error::RiccatiNoSolution("singular Lyapunov step".into()))?;
        pi = (&next + next.transpose()) * 0.5;
    }
    let residual = riccati_residual(&a_s, b_u, &pi);
    let scale = 1.0 + pi.norm() * (a_s.norm() + g.norm() * pi.norm());
    if !(residual <= RICCATI_TOL.max(1e-14 * scale)) {
        return Err(Error::RiccatiNoSolution(format!(
            "residual {residual:.3e} after polishing"
        )));
    }
    let min_eig = pi.symmetric_eigenvalues().min();
    if min_eig < -1e-10 * pi.norm().max(1.0) {
        return Err(Error::RiccatiNoSolution(format!(
            "solution is indefinite (min eig {min_eig:.3e})"
        )));
    }
    let gain = -b_u.transpose() * &pi;
    let closed = a_u + b_u * &gain;
    let closed_loop_poles: Vec<[f64; 2]> = closed.complex_eigenvalues().iter().map(|z| [z.re, z.im]).collect();
    if let Some(p) = closed_loop_poles.iter().find(|p| p[0] >= -lambda) {
        return Err(Error::RiccatiNoSolution(format!(
            "closed-loop pole {:.6} is not below -lambda",
            p[0]
        )));
    }
    Ok(FeedbackGain {
        lambda,
        riccati_solution: pi,
        gain,
        closed_loop_poles,
        riccati_residual: residual,
    })
}

/// Stabilizing solution from the matrix sign of the Hamiltonian
/// [[A, -G], [-I, -A^T]].
fn hamiltonian_sign_solution(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-DMatrix::identity(n, n)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let zi = lu
            .try_inverse()
            .ok_or_else(|| Error::RiccatiNoSolution("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let c = det.abs().powf(1.0 / (2 * n) as f64);
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let next = (&z / c + zi * c) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        if change <= 1e-13 * z.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RiccatiNoSolution("sign iteration stalled".into()));
    }
    // [W12; W22 + I] Pi = -[W11 + I; W21]
    let mut lhs = DMatrix::zeros(2 * n, n);
    let mut rhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let pi = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::RiccatiNoSolution(e.to_string()))?;
    Ok((&pi + pi.transpose()) * 0.5)
}

/// Solves A^T X + X A = C through the Kronecker form.
fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let mut k = DMatrix::zeros(n * n, n * n);
    // vec(A^T X) = (I kron A^T) vec X, vec(X A) = (A^T kron I) vec X
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                k[(row, l + n * j)] += at[(i, l)];
                k[(row, i + n * l)] += a[(l, j)];
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, c.iter().copied());
    let x = k.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Closed-form Riccati solution of the scalar problem, for reference.
pub fn scalar_riccati(a: f64, beta: f64) -> f64 {
    (a + (a * a + beta * beta).sqrt()) / (beta * beta)
}

#[cfg(test)]
mod tests;
