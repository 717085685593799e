//! Neumann potentials, Stokes liftings, the Leray projector and the coupled
//! block system with added mass.

mod block;
mod dofmap;
mod leray;
mod lifting;
mod neumann;

pub use block::{assemble_block_system, BlockSystem};
pub use dofmap::{DofMap, Target};
pub use leray::{fluid_inner, fluid_norm, gradient_part_defect, gradient_potential, leray_project, FluidField};
pub use lifting::{lift_stokes, InterfaceField, LiftedField, StokesLifter, FLUX_TOL};
pub use neumann::{interface_moments, rigid_neumann_load, solve_neumann, NeumannSolution, NeumannSolver, RigidDatum};
