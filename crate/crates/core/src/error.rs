use std::path::PathBuf;

use thiserror::Error;

use crate::schur::RhsFamily;
use crate::sparse::PcgReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("Jacobi preconditioner: diagonal entry {value:e} in row {row} is not strictly positive")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("dense solve: matrix numerically singular (pivot {pivot:e} at column {col})")]
    SingularMatrix { col: usize, pivot: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model geometry: {0}")]
    Geometry(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{name} is not symmetric: max |A - A^T| = {deviation:e} exceeds {limit:e}")]
    Asymmetric {
        name: &'static str,
        deviation: f64,
        limit: f64,
    },

    #[error("mass matrix has a nonzero entry on non-conductive dof {0}")]
    MassOnNonConductive(usize),

    #[error("source pattern is nonzero on conductive dof {0}")]
    SourceOnConductor(usize),

    #[error("empty {0} partition")]
    EmptyPartition(&'static str),

    #[error("inconsistent source: K_nn x = j_s,n not solvable (relative residual {residual:e} after {iterations} PCG iterations)")]
    InconsistentSource { residual: f64, iterations: usize },

    #[error("{family} solve failed at step {step}: relative residual {:e} after {} iterations", report.final_relative_residual, report.iterations)]
    SolveFailed {
        family: RhsFamily,
        step: usize,
        report: PcgReport,
    },

    #[error("pseudo-inverse PCG did not converge: relative residual {:e} after {} iterations", .0.final_relative_residual, .0.iterations)]
    PseudoInverse(PcgReport),

    #[error("CFL violation suspected at step {step} (t = {t:e} s): |a_c|_inf = {norm:e} exceeds 1e12 x initial scale {scale:e}")]
    Instability { step: usize, t: f64, norm: f64, scale: f64 },

    #[error("Newton-Raphson diverged at step {step}: residual grew for 3 consecutive iterations (|F| = {residual:e})")]
    NewtonDiverged { step: usize, residual: f64 },

    #[error(
        "Newton-Raphson did not converge at step {step} within {iterations} iterations (|F|/scale = {relative:e})"
    )]
    NewtonNotConverged {
        step: usize,
        iterations: usize,
        relative: f64,
    },

    #[error("Newton linear solve failed at step {step}: relative residual {:e} after {} iterations", report.final_relative_residual, report.iterations)]
    NewtonLinearSolve { step: usize, report: PcgReport },

    #[error("degenerate CSPE subspace: projected matrix is singular ({0})")]
    DegenerateSubspace(String),

    #[error("probe: {0}")]
    Probe(String),

    #[error("CSV: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
