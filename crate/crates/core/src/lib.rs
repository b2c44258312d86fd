//! Explicit time integration of magnetoquasistatic (eddy-current) problems.
//!
//! The semi-discrete system `M da/dt + K(a) a = j_s(t)` is a DAE because the
//! conductivity mass `M` vanishes on air dofs. Eliminating the air block with a
//! generalized Schur complement leaves an ODE on the conductor that explicit
//! Euler can integrate under a CFL bound. The air pseudo-inverse is applied by
//! PCG, started from subspace projection extrapolation (CSPE) vectors.
//!
//! - [`sparse`]: CSR, PCG, Gram-Schmidt, power iteration, dense solves.
//! - [`problem`]: model problems, materials, Matrix Market I/O, partitioning.
//! - [`schur`]: the explicit Schur-complement integrator and CFL estimate.
//! - [`cspe`]: start-vector subspaces.
//! - [`implicit`]: implicit Euler with Newton-Raphson, used as reference.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cspe;
pub mod error;
pub mod implicit;
pub mod problem;
pub mod schur;
pub mod sparse;
pub mod trajectory;

pub use error::{Error, Result};
