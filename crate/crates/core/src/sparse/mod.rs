//! Sparse and small dense linear-algebra kernels.
//!
//! Everything the integrators need lives here: CSR storage and products,
//! preconditioned conjugate gradients, modified Gram-Schmidt, power
//! iteration and a Cholesky solve for the projected CSPE systems.
//!
//! All reductions (dot products, row sums) run sequentially in index order,
//! so every kernel is bitwise deterministic for identical inputs.

mod csr;
mod dense;
mod eigen;
mod mgs;
mod pcg;
pub mod vec;

pub use csr::{spmv, CsrMatrix, LinearOperator};
pub use dense::{dense_solve, DenseMatrix};
pub use eigen::{power_iteration, power_iteration_general, EigenEstimate, DEFAULT_SEED};
pub use mgs::{mgs_orthonormalize, DEFAULT_DROP_TOL};
pub use pcg::{build_jacobi, pcg, PcgReport, Preconditioner};
