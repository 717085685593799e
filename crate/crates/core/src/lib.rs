//! Finite element laboratory for a rigid body immersed in a Stokes fluid:
//! coupled operators with added mass, spectral splitting, Riccati boundary
//! feedback, closed-loop simulation and admissible solid deformations.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coupled;
pub mod deformation;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod simulation;
pub mod spectral;
pub mod stabilization;

pub use error::{Error, Result};
