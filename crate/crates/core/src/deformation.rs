//! Internal solid deformations driven by an interface velocity: the nonlocal
//! elliptic problem for phi solved by fixed point, the linearized
//! self-propulsion constraints and the time integration of X*.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::coupled::{BlockSystem, InterfaceField, FLUX_TOL};
use crate::error::{Error, Result};
use crate::fem::forms;
use crate::linalg::{dot, norm, Csr, SparseLu, Triplets};

pub const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;
const STALL_LIMIT: usize = 5;
const MAX_DOUBLINGS: usize = 12;

/// Solution of mu phi - 2 div D(phi) = F(phi) in S, phi = zeta on dS.
#[derive(Clone, Debug)]
pub struct SolidVelocityField {
    /// Full solid P2 vector.
    pub phi: Vec<f64>,
    pub mu: f64,
    /// Traction moments <2 D(phi) n, E_k> against e1, e2 and the rotation,
    /// with n the outward normal of the solid.
    pub traction_moments: [f64; 3],
    /// |delta alpha| per iteration, relative to the fixed-point scale.
    pub iteration_report: Vec<f64>,
    /// Relative residual of the weak equation at the interior dofs.
    pub equation_residual: f64,
}

/// Factorized mu-shifted elasticity operator on the solid with the rigid
/// generators, reusable across snapshots.
pub struct LameSolver<'a> {
    blocks: &'a BlockSystem,
    pub mu: f64,
    operator: Csr,
    /// Solid dof -> interior index.
    interior: Vec<Option<usize>>,
    n_interior: usize,
    lu: SparseLu,
    generators: [Vec<f64>; 3],
    /// Ms E_k
    generator_loads: [Vec<f64>; 3],
    gram: Matrix3<f64>,
    gram_inv: Matrix3<f64>,
}

impl<'a> LameSolver<'a> {
    pub fn new(blocks: &'a BlockSystem, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
        }
        let f = &blocks.forms;
        let solid = &blocks.spaces.solid;
        let operator = Csr::axpby(mu, &f.solid_mass, 1.0, &f.solid_strain);
        let n = 2 * solid.n_nodes();
        let mut on_boundary = vec![false; solid.n_nodes()];
        for &k in &blocks.spaces.solid_interface_nodes {
            on_boundary[k] = true;
        }
        let mut interior = vec![None; n];
        let mut n_interior = 0;
        for k in 0..solid.n_nodes() {
            if !on_boundary[k] {
                for c in 0..2 {
                    interior[2 * k + c] = Some(n_interior);
                    n_interior += 1;
                }
            }
        }
        let a_ii = operator.restrict(&interior, n_interior, &interior, n_interior);
        let lu = SparseLu::new(a_ii)?;
        let c = blocks.rigid.centroid;
        let generators = [
            solid.interpolate_vec(|_| [1.0, 0.0]),
            solid.interpolate_vec(|_| [0.0, 1.0]),
            solid.interpolate_vec(|y| [-(y[1] - c[1]), y[0] - c[0]]),
        ];
        let generator_loads = generators.clone().map(|g| f.solid_mass.matvec(&g));
        let gram = Matrix3::from_fn(|i, j| dot(&generators[i], &generator_loads[j]));
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("degenerate solid moments".into()))?;
        Ok(LameSolver {
            blocks,
            mu,
            operator,
            interior,
            n_interior,
            lu,
            generators,
            generator_loads,
            gram,
            gram_inv,
        })
    }

    /// The rigid generators e1, e2, y^perp on the solid nodes.
    pub fn generators(&self) -> &[Vec<f64>; 3] {
        &self.generators
    }

    /// Ms F for traction moments alpha. With the generators Ms-orthogonal this
    /// is -(alpha_1 e1 + alpha_2 e2)/|S| - alpha_3 y^perp / int |y|^2, i.e.
    /// the force and torque spread by (rho_S/M) and (rho_S/I0).
    fn force_load(&self, alpha: &Vector3<f64>) -> Vec<f64> {
        let beta = self.gram_inv * alpha;
        let mut out = vec![0.0; self.operator.n_rows];
        for k in 0..3 {
            for (o, g) in out.iter_mut().zip(&self.generator_loads[k]) {
                *o -= beta[k] * g;
            }
        }
        out
    }

    /// Solid vector carrying zeta on the interface, zero elsewhere.
    pub fn boundary_vector(&self, zeta: &InterfaceField) -> Vec<f64> {
        let mut v = vec![0.0; self.operator.n_rows];
        for (&k, val) in self.blocks.spaces.solid_interface_nodes.iter().zip(&zeta.values) {
            v[2 * k] = val[0];
            v[2 * k + 1] = val[1];
        }
        v
    }

    /// Dirichlet solve with the force frozen at `alpha`.
    fn solve_frozen(&self, boundary: &[f64], alpha: &Vector3<f64>) -> Result<Vec<f64>> {
        let load = self.force_load(alpha);
        let ab = self.operator.matvec(boundary);
        let mut rhs = vec![0.0; self.n_interior];
        for (i, t) in self.interior.iter().enumerate() {
            if let Some(j) = *t {
                rhs[j] = load[i] - ab[i];
            }
        }
        let x = self.lu.solve(&rhs)?;
        let mut phi = boundary.to_vec();
        for (i, t) in self.interior.iter().enumerate() {
            if let Some(j) = *t {
                phi[i] = x[j];
            }
        }
        Ok(phi)
    }

    /// Consistent traction moments of `phi` solving the frozen problem.
    fn traction_moments(&self, phi: &[f64], alpha: &Vector3<f64>) -> Vector3<f64> {
        let r = self.operator.matvec(phi);
        // <t, E_k> = ((mu Ms + Ks) phi, E_k) - (F, E_k), and (F, E_k) = -alpha_k
        Vector3::from_fn(|k, _| dot(&r, &self.generators[k]) + alpha[k])
    }

    fn check_flux(&self, zeta: &InterfaceField) -> Result<()> {
        let (spaces, forms) = (&self.blocks.spaces, &self.blocks.forms);
        let flux = zeta.flux(spaces, forms);
        let tol = FLUX_TOL * zeta.l2_norm(spaces, forms);
        if flux.abs() > tol {
            return Err(Error::FluxViolation { flux, tol });
        }
        Ok(())
    }

    /// The fixed-point iteration: freeze F, solve, recompute the traction.
    pub fn fixed_point(&self, zeta: &InterfaceField) -> Result<SolidVelocityField> {
        self.check_flux(zeta)?;
        let boundary = self.boundary_vector(zeta);
        let ms = &self.blocks.forms.solid_mass;
        let mut alpha = Vector3::zeros();
        let mut history = Vec::new();
        let mut stalled = 0;
        for _ in 0..MAX_ITERATIONS {
            let phi = self.solve_frozen(&boundary, &alpha)?;
            let next = self.traction_moments(&phi, &alpha);
            let step = (next - alpha).norm();
            let scale =
                next.norm() + self.mu * ms.bilinear(&phi, &phi).max(0.0).sqrt() * self.gram.diagonal().amax().sqrt();
            let rel = if scale > 0.0 { step / scale } else { 0.0 };
            if let Some(&prev) = history.last() {
                stalled = if rel >= prev && rel > FIXED_POINT_TOL {
                    stalled + 1
                } else {
                    0
                };
            }
            history.push(rel);
            alpha = next;
            if rel <= FIXED_POINT_TOL {
                let phi = self.solve_frozen(&boundary, &alpha)?;
                return Ok(self.finish(phi, alpha, history));
            }
            if stalled >= STALL_LIMIT {
                return Err(Error::FixedPointDivergence { mu: self.mu });
            }
        }
        Err(Error::FixedPointDivergence { mu: self.mu })
    }

    fn finish(&self, phi: Vec<f64>, alpha: Vector3<f64>, history: Vec<f64>) -> SolidVelocityField {
        let r = self.operator.matvec(&phi);
        let load = self.force_load(&alpha);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for (i, t) in self.interior.iter().enumerate() {
            if t.is_some() {
                num += (r[i] - load[i]).powi(2);
                den += r[i].powi(2) + load[i].powi(2);
            }
        }
        SolidVelocityField {
            phi,
            mu: self.mu,
            traction_moments: [alpha[0], alpha[1], alpha[2]],
            iteration_report: history,
            equation_residual: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
        }
    }

    /// Direct solve of the same problem with the three moments as extra
    /// unknowns: interior equations plus mu (phi, E_k) = 0.
    pub fn bordered(&self, zeta: &InterfaceField) -> Result<SolidVelocityField> {
        self.check_flux(zeta)?;
        let boundary = self.boundary_vector(zeta);
        let n = self.n_interior;
        let mut t = Triplets::new(n + 3, n + 3);
        for (r, c, v) in self.operator.iter() {
            if let (Some(i), Some(j)) = (self.interior[r], self.interior[c]) {
                t.push(i, j, v);
            }
        }
        // unknowns beta = G^{-1} alpha; Ms F = -sum_k beta_k Ms E_k
        let mut rhs = vec![0.0; n + 3];
        let ab = self.operator.matvec(&boundary);
        for (i, tg) in self.interior.iter().enumerate() {
            if let Some(j) = *tg {
                rhs[j] = -ab[i];
                for k in 0..3 {
                    let g = self.generator_loads[k][i];
                    if g != 0.0 {
                        t.push(j, n + k, g);
                    }
                }
            }
        }
        for k in 0..3 {
            // (mu Ms + Ks) is symmetric: row k is E_k^T A
            let ae = self.operator.matvec(&self.generators[k]);
            for (i, tg) in self.interior.iter().enumerate() {
                if let Some(j) = *tg {
                    if ae[i] != 0.0 {
                        t.push(n + k, j, ae[i]);
                    }
                }
            }
            rhs[n + k] = -dot(&ae, &boundary);
        }
        let lu = SparseLu::new(t.to_csr())?;
        let x = lu.solve(&rhs)?;
        let beta = Vector3::new(x[n], x[n + 1], x[n + 2]);
        let alpha = self.gram * beta;
        let mut phi = boundary;
        for (i, tg) in self.interior.iter().enumerate() {
            if let Some(j) = *tg {
                phi[i] = x[j];
            }
        }
        Ok(self.finish(phi, alpha, Vec::new()))
    }
}

/// Smallest eigenvalue of the Dirichlet Laplacian on the solid, by inverse
/// iteration.
pub fn solid_poincare_eigenvalue(blocks: &BlockSystem) -> Result<f64> {
    let f = &blocks.forms;
    let solid = &blocks.spaces.solid;
    let mut on_boundary = vec![false; solid.n_nodes()];
    for &k in &blocks.spaces.solid_interface_nodes {
        on_boundary[k] = true;
    }
    let mut map = vec![None; solid.n_nodes()];
    let mut n = 0;
    for (k, b) in on_boundary.iter().enumerate() {
        if !b {
            map[k] = Some(n);
            n += 1;
        }
    }
    let k = f.solid_scalar_stiffness.restrict(&map, n, &map, n);
    let m = f.solid_scalar_mass.restrict(&map, n, &map, n);
    let lu = SparseLu::new(k.clone())?;
    let mut v = vec![1.0; n];
    let mut rq = f64::INFINITY;
    for _ in 0..200 {
        let w = lu.solve(&m.matvec(&v))?;
        let nw = m.bilinear(&w, &w).sqrt();
        v = w.iter().map(|x| x / nw).collect();
        let next = k.bilinear(&v, &v);
        if (rq - next).abs() <= 1e-13 * next {
            return Ok(next);
        }
        rq = next;
    }
    Ok(rq)
}

/// Starting shift 10 * 2 / C_p^2 = 20 lambda_p.
pub fn mu_min(blocks: &BlockSystem) -> Result<f64> {
    Ok(20.0 * solid_poincare_eigenvalue(blocks)?)
}

/// Fixed point at `mu_start`, doubling mu whenever the iteration diverges.
pub fn solve_lame_fixed_point(
    blocks: &BlockSystem,
    zeta: &InterfaceField,
    mu_start: f64,
) -> Result<SolidVelocityField> {
    let mut mu = mu_start;
    for _ in 0..=MAX_DOUBLINGS {
        match LameSolver::new(blocks, mu)?.fixed_point(zeta) {
            Err(Error::FixedPointDivergence { .. }) => mu *= 2.0,
            other => return other,
        }
    }
    Err(Error::FixedPointDivergence { mu })
}

/// The three linearized constraints per snapshot.
#[derive(Clone, Debug, Serialize)]
pub struct ConstraintReport {
    /// [|int_dS phi.n|, |int_S phi|, |int_S y ^ phi|] per snapshot.
    pub residuals: Vec<[f64; 3]>,
    pub tolerances: Vec<f64>,
    pub max: [f64; 3],
    pub admissible: bool,
}

impl ConstraintReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is serializable")
    }
}

/// Residuals of one solid field.
pub fn constraint_residuals(blocks: &BlockSystem, phi: &[f64]) -> [f64; 3] {
    let solid = &blocks.spaces.solid;
    let ms = &blocks.forms.solid_mass;
    let flux = forms::boundary_flux(solid, crate::geometry::BoundaryTag::Interface);
    let mphi = ms.matvec(phi);
    let c = blocks.rigid.centroid;
    let e1 = solid.interpolate_vec(|_| [1.0, 0.0]);
    let e2 = solid.interpolate_vec(|_| [0.0, 1.0]);
    let r = solid.interpolate_vec(|y| [-(y[1] - c[1]), y[0] - c[0]]);
    [
        dot(&flux, phi).abs(),
        dot(&e1, &mphi).hypot(dot(&e2, &mphi)),
        dot(&r, &mphi).abs(),
    ]
}

/// tol = 10 h^2 ||phi||_{L2(S)}
pub fn constraint_tolerance(blocks: &BlockSystem, phi: &[f64]) -> f64 {
    let h = blocks.spaces.mesh.max_edge_length();
    10.0 * h * h * blocks.forms.solid_mass.bilinear(phi, phi).max(0.0).sqrt()
}

pub fn check_admissibility(blocks: &BlockSystem, phis: &[Vec<f64>]) -> ConstraintReport {
    let residuals: Vec<[f64; 3]> = phis.iter().map(|p| constraint_residuals(blocks, p)).collect();
    let tolerances: Vec<f64> = phis.iter().map(|p| constraint_tolerance(blocks, p)).collect();
    let mut max = [0.0f64; 3];
    for r in &residuals {
        for k in 0..3 {
            max[k] = max[k].max(r[k]);
        }
    }
    let admissible = residuals
        .iter()
        .zip(&tolerances)
        .all(|(r, &t)| r.iter().all(|&v| v <= t));
    ConstraintReport {
        residuals,
        tolerances,
        max,
        admissible,
    }
}

/// ||phi||_{H1(S)}
pub fn solid_h1_norm(blocks: &BlockSystem, phi: &[f64]) -> f64 {
    let lap = forms::vector_laplacian(&blocks.spaces.solid);
    (blocks.forms.solid_mass.bilinear(phi, phi) + lap.bilinear(phi, phi))
        .max(0.0)
        .sqrt()
}

/// H^{1/2}(dS) norm of an interface datum through its discrete harmonic
/// extension into the solid.
pub fn trace_norm(blocks: &BlockSystem, zeta: &InterfaceField) -> Result<f64> {
    let f = &blocks.forms;
    let solid = &blocks.spaces.solid;
    let mut map = vec![None; solid.n_nodes()];
    let mut boundary = vec![None; solid.n_nodes()];
    for (i, &k) in blocks.spaces.solid_interface_nodes.iter().enumerate() {
        boundary[k] = Some(i);
    }
    let mut n = 0;
    for k in 0..solid.n_nodes() {
        if boundary[k].is_none() {
            map[k] = Some(n);
            n += 1;
        }
    }
    let k_ii = f.solid_scalar_stiffness.restrict(&map, n, &map, n);
    let lu = SparseLu::new(k_ii)?;
    let mut total = 0.0;
    for c in 0..2 {
        let mut g = vec![0.0; solid.n_nodes()];
        for (k, b) in boundary.iter().enumerate() {
            if let Some(i) = b {
                g[k] = zeta.values[*i][c];
            }
        }
        let kg = f.solid_scalar_stiffness.matvec(&g);
        let rhs: Vec<f64> = (0..solid.n_nodes())
            .filter(|&k| map[k].is_some())
            .map(|k| -kg[k])
            .collect();
        let x = lu.solve(&rhs)?;
        for (k, m) in map.iter().enumerate() {
            if let Some(j) = m {
                g[k] = x[*j];
            }
        }
        total += f.solid_scalar_stiffness.bilinear(&g, &g) + f.solid_scalar_mass.bilinear(&g, &g);
    }
    Ok(total.max(0.0).sqrt())
}

/// Snapshots of X*(y, t_k) - y on the solid nodes.
#[derive(Clone, Debug)]
pub struct DeformationTrajectory {
    pub times: Vec<f64>,
    pub displacements: Vec<Vec<f64>>,
}

/// X*(y, t) = y + int_0^t e^{-lambda s} phi(y, s) ds by the trapezoid rule on
/// a uniform grid.
pub fn integrate_deformation(times: &[f64], phis: &[Vec<f64>], lambda: f64) -> Result<DeformationTrajectory> {
    if times.len() != phis.len() || times.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} sample times for {} snapshots",
            times.len(),
            phis.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "decay rate must be positive, got {lambda}"
        )));
    }
    if times[0] != 0.0 {
        return Err(Error::GridMismatch("samples must start at t = 0".into()));
    }
    if times.len() > 1 {
        let dt = times[1] - times[0];
        let uniform = dt > 0.0 && times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        if !uniform {
            return Err(Error::GridMismatch("sample times are not uniform".into()));
        }
    }
    let n = phis[0].len();
    if phis.iter().any(|p| p.len() != n) {
        return Err(Error::GridMismatch("snapshots differ in size".into()));
    }
    let mut acc = vec![0.0; n];
    let mut displacements = vec![acc.clone()];
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let (w0, w1) = ((-lambda * times[k - 1]).exp(), (-lambda * times[k]).exp());
        for ((a, p0), p1) in acc.iter_mut().zip(&phis[k - 1]).zip(&phis[k]) {
            *a += 0.5 * dt * (w0 * p0 + w1 * p1);
        }
        displacements.push(acc.clone());
    }
    Ok(DeformationTrajectory {
        times: times.to_vec(),
        displacements,
    })
}

impl DeformationTrajectory {
    /// `vertex_id,dx,dy` for the mesh vertices of the solid at snapshot `k`.
    pub fn snapshot_csv(&self, blocks: &BlockSystem, k: usize) -> String {
        let solid = &blocks.spaces.solid;
        let mut ids: Vec<(usize, usize)> = solid.vertex_node.iter().map(|(&v, &n)| (v, n)).collect();
        ids.sort_unstable();
        let d = &self.displacements[k];
        let mut s = String::from("vertex_id,dx,dy\n");
        for (v, node) in ids {
            let _ = writeln!(s, "{v},{:.10e},{:.10e}", d[2 * node], d[2 * node + 1]);
        }
        s
    }
}

/// Largest nodal distance between two solid fields, relative to the second.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests;
