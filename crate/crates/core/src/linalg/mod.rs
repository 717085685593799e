//! Sparse storage, direct solvers and Krylov iterations.

mod krylov;
mod solve;
mod sparse;

pub use krylov::{arnoldi, Krylov};
pub use solve::{SaddleSolver, SparseLu, SOLVE_TOL};
pub use sparse::{axpy, dot, norm, Csr, Triplets};
