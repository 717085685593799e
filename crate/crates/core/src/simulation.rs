//! Implicit-midpoint integration of the coupled system under boundary
//! control, in open and closed loop, and decay-rate fitting.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupled::{BlockSystem, RigidDatum};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Csr, SaddleSolver};
use crate::spectral::UnstableSubspace;
use crate::stabilization::{assemble_b, ControlBasis, FeedbackGain, ModalSystem};

/// Coupled state: reduced coordinates `x` (interior fluid dofs, h', omega)
/// and the control coefficients `control`; the fluid velocity is
/// T x + sum_j control_j L xi_j.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub x: Vec<f64>,
    pub control: Vec<f64>,
    pub time: f64,
}

impl CoupledState {
    pub fn zero(blocks: &BlockSystem, m: usize) -> Self {
        CoupledState {
            x: vec![0.0; blocks.n_x()],
            control: vec![0.0; m],
            time: 0.0,
        }
    }

    /// Initial datum from a full fluid field and a rigid velocity. The trace
    /// of `u` must equal h' + omega y on the interface and vanish on the
    /// wall; the result is then projected onto the divergence-free states.
    pub fn from_fluid(blocks: &BlockSystem, u: &[f64], datum: RigidDatum, m: usize) -> Result<Self> {
        let spaces = &blocks.spaces;
        let rigid = spaces.rigid_trace(datum.h, datum.omega);
        let scale = norm(u).max(norm(&rigid)).max(1.0);
        let mut worst: f64 = 0.0;
        for &k in &spaces.interface_nodes {
            for c in 0..2 {
                worst = worst.max((u[2 * k + c] - rigid[2 * k + c]).abs());
            }
        }
        for &k in &spaces.outer_nodes {
            worst = worst.max(u[2 * k].abs()).max(u[2 * k + 1].abs());
        }
        if worst > 1e-10 * scale {
            return Err(Error::InvalidInput(format!(
                "initial velocity is not compatible with the rigid motion (trace mismatch {worst:.3e})"
            )));
        }
        let x = blocks.project_divergence_free(&blocks.state_from_parts(u, datum))?;
        Ok(CoupledState {
            x,
            control: vec![0.0; m],
            time: 0.0,
        })
    }

    pub fn rigid(&self, blocks: &BlockSystem) -> [f64; 3] {
        let r = blocks.rigid_part(&self.x);
        [r[0], r[1], r[2]]
    }
}

/// Random divergence-free compatible state, smoothed by `passes` implicit
/// heat steps (Mc + eps Kc)^{-1} Mc so that its spectral content decays.
pub fn random_compatible_state(blocks: &BlockSystem, seed: u64, passes: usize, m: usize) -> Result<CoupledState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..blocks.n_x()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    x = blocks.project_divergence_free(&x)?;
    if passes > 0 {
        let eps = 0.02;
        let a = Csr::axpby(1.0, &blocks.mc, eps, &blocks.kc);
        let s = SaddleSolver::new(&a, &blocks.bc, Some(&blocks.forms.pressure_mean))?;
        for _ in 0..passes {
            x = s.solve(&blocks.mc.matvec(&x), None)?.0;
        }
    }
    let nrm = blocks.mc.bilinear(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    Ok(CoupledState {
        x,
        control: vec![0.0; m],
        time: 0.0,
    })
}

/// Control law applied during a run.
pub enum Control<'a> {
    Zero,
    /// Prescribed coefficients c(t).
    Open(&'a dyn Fn(f64) -> Vec<f64>),
    /// c = K z with z the unstable modal coordinates of the previous state.
    Feedback {
        gain: &'a FeedbackGain,
        modal: &'a ModalSystem,
        unstable: &'a UnstableSubspace,
    },
}

/// Implicit midpoint for
/// Mc x' + (Kc - s Mc) x + Bc^T p = -G_M (c' - s c) - G_K c,  Bc x = 0,
/// where s is the exponential shift (0 for the physical system), G_M =
/// T^T Mf L and G_K = T^T Kf L. The factorization is built once.
pub struct Integrator<'a> {
    pub blocks: &'a BlockSystem,
    pub dt: f64,
    pub shift: f64,
    m: usize,
    g_mass: Vec<Vec<f64>>,
    g_stiff: Vec<Vec<f64>>,
    lift_mass: DMatrix<f64>,
    lift_stiff: DMatrix<f64>,
    explicit: Csr,
    implicit: SaddleSolver,
}

impl<'a> Integrator<'a> {
    pub fn new(blocks: &'a BlockSystem, basis: Option<&ControlBasis>, dt: f64, shift: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let (g_mass, g_stiff, lift_mass, lift_stiff, m) = match basis {
            Some(b) => {
                let inj = assemble_b(b, blocks, 0.0);
                let m = b.dim();
                let forms = &blocks.forms;
                let lm = DMatrix::from_fn(m, m, |i, j| forms.mass.bilinear(&b.liftings[i], &b.liftings[j]));
                let lk = DMatrix::from_fn(m, m, |i, j| forms.viscous.bilinear(&b.liftings[i], &b.liftings[j]));
                (inj.mass_part, inj.stiffness_part, lm, lk, m)
            }
            None => (Vec::new(), Vec::new(), DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), 0),
        };
        let a = Csr::axpby(1.0, &blocks.kc, -shift, &blocks.mc);
        let lhs = Csr::axpby(1.0 / dt, &blocks.mc, 0.5, &a);
        let explicit = Csr::axpby(1.0 / dt, &blocks.mc, -0.5, &a);
        let implicit = SaddleSolver::new(&lhs, &blocks.bc, Some(&blocks.forms.pressure_mean))?;
        Ok(Integrator {
            blocks,
            dt,
            shift,
            m,
            g_mass,
            g_stiff,
            lift_mass,
            lift_stiff,
            explicit,
            implicit,
        })
    }

    pub fn n_controls(&self) -> usize {
        self.m
    }

    /// One step from `state` with the control moving to `c_next`.
    pub fn step(&self, state: &CoupledState, c_next: &[f64]) -> Result<CoupledState> {
        if c_next.len() != self.m || state.control.len() != self.m {
            return Err(Error::InvalidInput(format!("expected {} control coefficients", self.m)));
        }
        let (dt, s) = (self.dt, self.shift);
        let mut rhs = self.explicit.matvec(&state.x);
        for j in 0..self.m {
            let (c0, c1) = (state.control[j], c_next[j]);
            let wm = -((c1 - c0) / dt - s * 0.5 * (c1 + c0));
            let wk = -0.5 * (c1 + c0);
            for ((r, gm), gk) in rhs.iter_mut().zip(&self.g_mass[j]).zip(&self.g_stiff[j]) {
                *r += wm * gm + wk * gk;
            }
        }
        let x = self.implicit.solve(&rhs, None)?.0;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDivergence("non-finite state".into()));
        }
        Ok(CoupledState {
            x,
            control: c_next.to_vec(),
            time: state.time + dt,
        })
    }

    /// E = 1/2 (|u|^2 + M |h'|^2 + I0 omega^2) of the full state.
    pub fn energy(&self, state: &CoupledState) -> f64 {
        let (x, c) = (&state.x, &state.control);
        let mut e = self.blocks.mc.bilinear(x, x);
        for j in 0..self.m {
            e += 2.0 * c[j] * dot(x, &self.g_mass[j]);
            for k in 0..self.m {
                e += c[j] * self.lift_mass[(j, k)] * c[k];
            }
        }
        0.5 * e
    }

    /// 2 nu |D(u)|^2 of the full state.
    pub fn dissipation(&self, state: &CoupledState) -> f64 {
        let (x, c) = (&state.x, &state.control);
        let mut d = self.blocks.kc.bilinear(x, x);
        for j in 0..self.m {
            d += 2.0 * c[j] * dot(x, &self.g_stiff[j]);
            for k in 0..self.m {
                d += c[j] * self.lift_stiff[(j, k)] * c[k];
            }
        }
        d
    }

    fn next_control(&self, state: &CoupledState, control: &Control) -> Vec<f64> {
        match control {
            Control::Zero => vec![0.0; self.m],
            Control::Open(f) => f(state.time + self.dt),
            Control::Feedback { gain, modal, unstable } => {
                let z = modal.coordinates(unstable, &self.blocks.mc, &state.x, &state.control);
                gain.apply(&z)
            }
        }
    }
}

/// Sampled trajectory.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub rigid: Vec<[f64; 3]>,
    pub controls: Vec<Vec<f64>>,
    /// Reduced states, when recorded.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    fn record(&mut self, integ: &Integrator, s: &CoupledState, keep: bool) {
        self.times.push(s.time);
        self.energies.push(integ.energy(s));
        self.dissipation.push(integ.dissipation(s));
        self.rigid.push(s.rigid(integ.blocks));
        self.controls.push(s.control.clone());
        if keep {
            self.states.push(s.x.clone());
        }
    }

    /// Fitted state-norm decay rate over `window`.
    pub fn decay_rate(&self, window: (f64, f64)) -> Result<f64> {
        measure_decay(&self.times, &self.energies, window)
    }

    /// Columns t, energy, |h'|, |omega|, zeta_1..zeta_m.
    pub fn to_csv(&self) -> String {
        let m = self.controls.first().map_or(0, Vec::len);
        let mut s = String::from("t,energy,|h'|,|omega|");
        for j in 0..m {
            let _ = write!(s, ",zeta_{}", j + 1);
        }
        s.push('\n');
        for i in 0..self.times.len() {
            let r = self.rigid[i];
            let _ = write!(
                s,
                "{:.10e},{:.10e},{:.10e},{:.10e}",
                self.times[i],
                self.energies[i],
                r[0].hypot(r[1]),
                r[2].abs()
            );
            for c in &self.controls[i] {
                let _ = write!(s, ",{c:.10e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates from `initial` to `t_end`.
pub fn run(
    integ: &Integrator,
    initial: CoupledState,
    t_end: f64,
    control: &Control,
    record_states: bool,
) -> Result<Trajectory> {
    if !(t_end > initial.time) {
        return Err(Error::InvalidInput("final time must exceed the initial time".into()));
    }
    let steps = ((t_end - initial.time) / integ.dt).round().max(1.0) as usize;
    let mut traj = Trajectory::default();
    let mut state = initial;
    traj.record(integ, &state, record_states);
    for _ in 0..steps {
        let c = integ.next_control(&state, control);
        state = integ.step(&state, &c)?;
        traj.record(integ, &state, record_states);
    }
    Ok(traj)
}

/// Least-squares slope of log E over `window`, halved: the decay rate of
/// the state norm.
pub fn measure_decay(times: &[f64], energies: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != energies.len() {
        return Err(Error::GridMismatch("times and energies differ in length".into()));
    }
    let eps = 1e-9 * (window.1 - window.0).abs();
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(energies)
        .filter(|(t, _)| **t >= window.0 - eps && **t <= window.1 + eps)
        .map(|(&t, &e)| (t, e))
        .collect();
    if pts.len() < 10 {
        return Err(Error::DegenerateFit(format!(
            "{} samples in the window, need 10",
            pts.len()
        )));
    }
    if let Some((t, e)) = pts.iter().find(|(_, e)| !(*e > f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateFit(format!("energy {e:e} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(-0.5 * sxy / sxx)
}

/// Default step and horizon for a target rate: dt = min(1e-2, 0.1/lambda),
/// T = 8/lambda.
pub fn default_schedule(lambda: f64) -> (f64, f64) {
    ((0.1 / lambda).min(1e-2), 8.0 / lambda)
}

#[cfg(test)]
mod tests;
