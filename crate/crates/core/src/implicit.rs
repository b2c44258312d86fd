//! Implicit Euler on the unpartitioned DAE with Newton-Raphson, the
//! accuracy reference for the explicit scheme.
//!
//! Each step solves `F(a) = (M/dt)(a - a^m) + K(a) a - j_s(t + dt) = 0` with
//! the Jacobian `M/dt + K(a) + (dK/da) a`. Air rows of `M` carry a tiny
//! regularizing conductivity so that the Jacobian is definite.

use std::time::Instant;

use log::debug;

use crate::error::{Error, Result};
use crate::problem::{DiscreteSystem, Probe};
use crate::schur::sample;
use crate::sparse::vec::{axpy, norm2};
use crate::sparse::{build_jacobi, pcg, CsrMatrix};
use crate::trajectory::Trajectory;

/// Inner PCG tolerances below this are unattainable in double precision.
const LINEAR_TOL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// `|F| <= tol_newton * |j_s(t + dt)|`.
    pub tol_newton: f64,
    pub max_newton_iter: usize,
    /// Cap on the relative residual of the inner PCG solves.
    pub tol_linear: f64,
    pub max_linear_iter: usize,
    /// Air conductivity as a fraction of `max diag(M)`.
    pub regularization_eps: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_newton: 1e-8,
            max_newton_iter: 50,
            tol_linear: 1e-10,
            max_linear_iter: 20_000,
            regularization_eps: 1e-10,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_newton > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol_newton must be > 0, got {}",
                self.tol_newton
            )));
        }
        if !(self.tol_linear > 0.0 && self.tol_linear < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tol_linear must lie in (0, 1), got {}",
                self.tol_linear
            )));
        }
        if !(self.regularization_eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization_eps must be >= 0, got {}",
                self.regularization_eps
            )));
        }
        if self.max_newton_iter == 0 {
            return Err(Error::InvalidParameter("max_newton_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Newton history of one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub linear_iterations: usize,
    /// `|F|` before each iteration and after the last one.
    pub residuals: Vec<f64>,
    /// Reference norm of the stopping test.
    pub scale: f64,
}

/// `M` with `eps * max diag(M)` added on the air diagonal.
pub fn regularized_mass(sys: &DiscreteSystem, eps: f64) -> Result<CsrMatrix> {
    let max_diag = sys.mass.diagonal().into_iter().fold(0.0f64, f64::max);
    let shift: Vec<f64> = sys
        .conductive
        .iter()
        .map(|&c| if c { 0.0 } else { eps * max_diag })
        .collect();
    sys.mass.with_diagonal_shift(&shift)
}

fn residual(sys: &DiscreteSystem, m_dt: &CsrMatrix, a: &[f64], a_m: &[f64], j: &[f64]) -> Result<Vec<f64>> {
    let da: Vec<f64> = a.iter().zip(a_m).map(|(x, y)| x - y).collect();
    let mut f = m_dt.spmv(&da)?;
    axpy(1.0, &sys.stiffness(a).spmv(a)?, &mut f);
    axpy(-1.0, j, &mut f);
    Ok(f)
}

/// One implicit Euler step `a^m -> a^{m+1}` at `t_next = t_m + dt`.
pub fn implicit_euler_step(
    sys: &DiscreteSystem,
    a_m: &[f64],
    t_next: f64,
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, NewtonReport)> {
    let m = regularized_mass(sys, cfg.regularization_eps)?;
    step_impl(sys, &m.scaled(1.0 / dt), a_m, t_next, dt, cfg, 0)
}

fn step_impl(
    sys: &DiscreteSystem,
    m_dt: &CsrMatrix,
    a_m: &[f64],
    t_next: f64,
    dt: f64,
    cfg: &NewtonConfig,
    step: usize,
) -> Result<(Vec<f64>, NewtonReport)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if a_m.len() != sys.n_dofs() {
        return Err(Error::DimensionMismatch {
            what: "implicit state",
            expected: sys.n_dofs(),
            got: a_m.len(),
        });
    }
    let j = sys.source(t_next);
    // with a zero source the step size of the mass term sets the scale
    let scale = [norm2(&j), norm2(&m_dt.spmv(a_m)?)]
        .into_iter()
        .find(|&s| s > 0.0)
        .unwrap_or(1.0);
    let mut a = a_m.to_vec();
    let mut f = residual(sys, m_dt, &a, a_m, &j)?;
    let mut fn_ = norm2(&f);
    let mut rep = NewtonReport {
        residuals: vec![fn_],
        scale,
        ..Default::default()
    };
    let mut delta = vec![0.0; a.len()];
    let mut growth = 0;
    while fn_ > cfg.tol_newton * scale {
        if rep.iterations == cfg.max_newton_iter {
            return Err(Error::NewtonNotConverged {
                step,
                iterations: rep.iterations,
                relative: fn_ / scale,
            });
        }
        let jac = m_dt.add_scaled(1.0, &sys.assembler.jacobian(&a), 1.0)?;
        let pre = build_jacobi(&jac)?;
        let tol = cfg
            .tol_linear
            .min(0.1 * cfg.tol_newton * scale / fn_)
            .max(LINEAR_TOL_FLOOR);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let (d, lin) = pcg(&jac, &rhs, &delta, tol, cfg.max_linear_iter, &pre)?;
        if !lin.converged {
            return Err(Error::NewtonLinearSolve { step, report: lin });
        }
        rep.linear_iterations += lin.iterations;
        axpy(1.0, &d, &mut a);
        delta = d;
        rep.iterations += 1;

        f = residual(sys, m_dt, &a, a_m, &j)?;
        let next = norm2(&f);
        if !next.is_finite() {
            return Err(Error::NewtonDiverged { step, residual: next });
        }
        growth = if next > fn_ { growth + 1 } else { 0 };
        fn_ = next;
        rep.residuals.push(fn_);
        if growth >= 3 {
            return Err(Error::NewtonDiverged { step, residual: fn_ });
        }
    }
    Ok((a, rep))
}

/// Per-run metrics of the implicit reference.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImplicitReport {
    pub steps: usize,
    pub dt: f64,
    pub newton_iterations: Vec<usize>,
    /// PCG iterations per step, summed over its Newton iterations.
    pub linear_iterations: Vec<usize>,
    pub total_newton_iterations: usize,
    pub total_linear_iterations: usize,
    pub wall_seconds: f64,
    pub final_probes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ImplicitOutput {
    pub trajectory: Trajectory,
    pub report: ImplicitReport,
    pub final_state: Vec<f64>,
}

/// Implicit Euler from `(t0, a0)` to `t_end`, sampling every `output_stride`
/// steps; the last step is shortened to land on `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_implicit(
    sys: &DiscreteSystem,
    a0: &[f64],
    t0: f64,
    t_end: f64,
    dt: f64,
    cfg: &NewtonConfig,
    probes: &[Probe],
    output_stride: usize,
) -> Result<ImplicitOutput> {
    cfg.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let stride = output_stride.max(1);
    let mut out = ImplicitOutput {
        trajectory: Trajectory::new(probes.iter().map(|p| p.name.clone()).collect()),
        report: ImplicitReport {
            dt,
            ..Default::default()
        },
        final_state: a0.to_vec(),
    };
    if !(t_end > t0) {
        return Ok(out);
    }
    let started = Instant::now();
    let m = regularized_mass(sys, cfg.regularization_eps)?;
    let mut m_dt = m.scaled(1.0 / dt);
    let mut a = a0.to_vec();
    let mut t = t0;
    out.trajectory.push(t, sample(sys, &a, probes)?);
    let mut k = 0usize;
    while t < t_end {
        let mut t_next = t0 + (k + 1) as f64 * dt;
        if t_next > t_end || t_end - t_next < 1e-9 * dt {
            t_next = t_end;
        }
        let h = t_next - t;
        if h != dt {
            m_dt = m.scaled(1.0 / h);
        }
        let (next, rep) = step_impl(sys, &m_dt, &a, t_next, h, cfg, k + 1)?;
        a = next;
        t = t_next;
        k += 1;
        out.report.newton_iterations.push(rep.iterations);
        out.report.linear_iterations.push(rep.linear_iterations);
        out.report.total_newton_iterations += rep.iterations;
        out.report.total_linear_iterations += rep.linear_iterations;
        if k.is_multiple_of(stride) || t >= t_end {
            out.trajectory.push(t, sample(sys, &a, probes)?);
        }
    }
    debug!(
        "implicit run: {k} steps, {} Newton / {} PCG iterations",
        out.report.total_newton_iterations, out.report.total_linear_iterations
    );
    out.report.steps = k;
    out.report.wall_seconds = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    out.report.final_probes = out.trajectory.last().map(<[f64]>::to_vec).unwrap_or_default();
    out.final_state = a;
    Ok(out)
}
