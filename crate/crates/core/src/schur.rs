//! Explicit Euler on the generalized Schur complement.
//!
//! With `S(a_c) = K_cc(a_c) - K_cn K_nn^# K_cn^T` the DAE reduces to
//!
//! ```text
//! M_cc da_c/dt = -K_cn K_nn^# j_s,n - S(a_c) a_c
//! a_n          = K_nn^# j_s,n - K_nn^# K_cn^T a_c
//! ```
//!
//! Every `K_nn^#` application is a PCG solve on a consistent right-hand side.
//! Each step performs one source solve, one coupling solve and (consistent
//! mass) one mass solve; the coupling solve of the recovered state is reused
//! by the next step.

use std::fmt;
use std::time::Instant;

use log::{debug, warn};

use crate::cspe::{AppendRule, CspeConfig, SolveContext, StartStrategy};
use crate::error::{Error, Result};
use crate::problem::{probe_flux, MassMode, PartitionedSystem, Probe};
use crate::sparse::vec::{all_finite, axpy, dot, norm2, norm_inf};
use crate::sparse::{pcg, power_iteration_general, CsrMatrix, PcgReport, Preconditioner, DEFAULT_SEED};
use crate::trajectory::{SolveRecord, StepRow, Trajectory};

/// Right-hand-side family of an inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhsFamily {
    /// `K_nn^# j_s,n`.
    Source,
    /// `K_nn^# K_cn^T a_c`.
    Coupling,
    /// `M_cc^{-1} r`.
    Mass,
}

impl fmt::Display for RhsFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhsFamily::Source => "source",
            RhsFamily::Coupling => "coupling",
            RhsFamily::Mass => "mass",
        })
    }
}

/// Growth factor of `|a_c|_inf` over its first nonzero value that is taken
/// as an instability.
pub const INSTABILITY_FACTOR: f64 = 1e12;

/// Lowest relative tolerance handed to a coupling solve.
const COUPLING_TOL_FLOOR: f64 = 1e-14;

/// Coupling solves are held to `tol * |j_s,n|` in absolute terms. `a_n` is
/// the difference of the source and coupling solutions, so its constraint
/// residual is then at most `2 tol |j_s,n|` even when `|K_cn^T a_c| >> |j_s,n|`.
fn coupling_tol(tol: f64, j_norm: f64, r: &[f64]) -> f64 {
    let r_norm = norm2(r);
    if j_norm > 0.0 && r_norm > j_norm {
        (tol * j_norm / r_norm).max(COUPLING_TOL_FLOOR)
    } else {
        tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub a_c: Vec<f64>,
    pub a_n: Vec<f64>,
}

impl FieldState {
    pub fn zero(ps: &PartitionedSystem) -> Self {
        Self {
            t: 0.0,
            a_c: vec![0.0; ps.n_c()],
            a_n: vec![0.0; ps.n_n()],
        }
    }

    pub fn from_global(ps: &PartitionedSystem, t: f64, a: &[f64]) -> Self {
        let (a_c, a_n) = ps.gather(a);
        Self { t, a_c, a_n }
    }

    pub fn to_global(&self, ps: &PartitionedSystem) -> Vec<f64> {
        ps.scatter(&self.a_c, &self.a_n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub tol_pcg: f64,
    pub max_pcg_iter: usize,
    pub n_cg_acc: usize,
    pub cspe_enabled: bool,
    pub max_subspace: usize,
    pub mass_mode: MassMode,
    /// Steps between CFL re-estimates for nonlinear materials; 0 disables.
    pub cfl_recheck_interval: usize,
    /// Start vectors when CSPE is disabled.
    pub baseline_start: StartStrategy,
    pub append_rule: AppendRule,
    /// Record the Galerkin residual of every CSPE start vector.
    pub galerkin_audit: bool,
    /// Probe sampling stride in steps.
    pub output_stride: usize,
    pub cfl_safety: f64,
    /// Relative tolerance of the CFL power iteration.
    pub cfl_tol: f64,
    /// Keep one step-report row per inner solve.
    pub record_steps: bool,
    /// Start-vector seed of the CFL power iteration.
    pub seed: u64,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            tol_pcg: 1e-6,
            max_pcg_iter: 10_000,
            n_cg_acc: 3,
            cspe_enabled: true,
            max_subspace: 32,
            mass_mode: MassMode::Consistent,
            cfl_recheck_interval: 250,
            baseline_start: StartStrategy::Previous,
            append_rule: AppendRule::Conjunctive,
            galerkin_audit: false,
            output_stride: 1,
            cfl_safety: 0.9,
            cfl_tol: 1e-6,
            record_steps: true,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.tol_pcg > 0.0 && self.tol_pcg < 1.0) {
            return bad(format!("tol_pcg must lie in (0, 1), got {}", self.tol_pcg));
        }
        if self.n_cg_acc < 1 {
            return bad("n_cg_acc must be >= 1".into());
        }
        if self.max_subspace < 1 {
            return bad("max_subspace must be >= 1".into());
        }
        if self.max_pcg_iter < 1 {
            return bad("max_pcg_iter must be >= 1".into());
        }
        if self.output_stride < 1 {
            return bad("output_stride must be >= 1".into());
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if self.baseline_start == StartStrategy::Cspe {
            return bad("baseline_start must be zero or previous".into());
        }
        Ok(())
    }

    fn cspe_config(&self) -> CspeConfig {
        CspeConfig {
            n_cg_acc: self.n_cg_acc,
            max_cols: self.max_subspace,
            rule: self.append_rule,
            galerkin_audit: self.galerkin_audit,
        }
    }

    fn strategy(&self) -> StartStrategy {
        if self.cspe_enabled {
            StartStrategy::Cspe
        } else {
            self.baseline_start
        }
    }
}

/// Start-vector state of one integration run, one context per family.
#[derive(Debug, Clone)]
pub struct CspeContext {
    pub source: SolveContext,
    pub coupling: SolveContext,
    pub mass: SolveContext,
    /// `(a_c, K_nn^# K_cn^T a_c)` of the last recovered state.
    coupling_cache: Option<(Vec<f64>, Vec<f64>)>,
    steps: usize,
    instability_scale: Option<f64>,
    dt_max: Option<f64>,
    warned_dt: bool,
}

impl CspeContext {
    pub fn new(ps: &PartitionedSystem, cfg: &StepperConfig) -> Result<Self> {
        let c = cfg.cspe_config();
        let s = cfg.strategy();
        Ok(Self {
            source: SolveContext::new(RhsFamily::Source, s, ps.n_n(), &c)?,
            coupling: SolveContext::new(RhsFamily::Coupling, s, ps.n_n(), &c)?,
            mass: SolveContext::new(RhsFamily::Mass, s, ps.n_c(), &c)?,
            coupling_cache: None,
            steps: 0,
            instability_scale: None,
            dt_max: None,
            warned_dt: false,
        })
    }

    /// Steps taken with this context.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Known stability bound, used to warn about unstable steps.
    pub fn set_dt_max(&mut self, dt_max: f64) {
        self.dt_max = Some(dt_max);
        self.warned_dt = false;
    }

    pub fn families(&self) -> [&SolveContext; 3] {
        [&self.source, &self.coupling, &self.mass]
    }
}

/// `K_nn^# r` by PCG; solves are consistent for `r` in the range of `K_nn`.
pub fn apply_pseudo_inverse(
    k_nn: &CsrMatrix,
    r: &[f64],
    start: &[f64],
    tol: f64,
    max_iter: usize,
    pre: &Preconditioner,
) -> Result<(Vec<f64>, PcgReport)> {
    let (x, rep) = pcg(k_nn, r, start, tol, max_iter, pre)?;
    if !rep.converged {
        return Err(Error::PseudoInverse(rep));
    }
    Ok((x, rep))
}

#[allow(clippy::too_many_arguments)]
fn solve_in(
    ctx: &mut SolveContext,
    a: &CsrMatrix,
    r: &[f64],
    tol: f64,
    max_iter: usize,
    pre: &Preconditioner,
    step: usize,
    log: &mut Vec<SolveRecord>,
) -> Result<Vec<f64>> {
    let x0 = ctx.start_vector(r, a)?;
    let (x, report) = pcg(a, r, &x0, tol, max_iter, pre)?;
    if !report.converged {
        return Err(Error::SolveFailed {
            family: ctx.family,
            step,
            report,
        });
    }
    ctx.record(&x, &report, a);
    log.push(SolveRecord {
        family: ctx.family,
        iterations: report.iterations,
        subspace_cols: ctx.subspace.n_cols(),
    });
    Ok(x)
}

/// `S x = K_cc x - K_cn K_nn^# K_cn^T x`; the inner solve uses `ctx` start
/// vectors when given, zero otherwise.
pub fn schur_apply(
    ps: &PartitionedSystem,
    k_cc: &CsrMatrix,
    x: &[f64],
    tol: f64,
    max_iter: usize,
    ctx: Option<&mut SolveContext>,
) -> Result<Vec<f64>> {
    let mut y = k_cc.spmv(x)?;
    let r = ps.k_nc.spmv(x)?;
    let k = match ctx {
        Some(c) => solve_in(c, &ps.k_nn, &r, tol, max_iter, &ps.k_nn_pre, 0, &mut Vec::new())?,
        None => apply_pseudo_inverse(&ps.k_nn, &r, &vec![0.0; r.len()], tol, max_iter, &ps.k_nn_pre)?.0,
    };
    axpy(-1.0, &ps.k_cn.spmv(&k)?, &mut y);
    Ok(y)
}

/// Result of one explicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub solves: Vec<SolveRecord>,
    /// `K_nn^# j_s,n(t + dt)`, shared by the update and the recovery.
    pub pinv_source: Vec<f64>,
    /// `K_nn^# K_cn^T a_c(t + dt)`.
    pub pinv_coupling: Vec<f64>,
    /// Whether the coupling solve of the old state came from the cache.
    pub coupling_reused: bool,
}

/// One explicit Euler step of size `cfg.dt`.
pub fn explicit_euler_step(
    ps: &PartitionedSystem,
    state: &FieldState,
    cfg: &StepperConfig,
    ctx: &mut CspeContext,
) -> Result<(FieldState, StepReport)> {
    step_with_dt(ps, state, cfg.dt, cfg, ctx)
}

fn step_with_dt(
    ps: &PartitionedSystem,
    state: &FieldState,
    dt: f64,
    cfg: &StepperConfig,
    ctx: &mut CspeContext,
) -> Result<(FieldState, StepReport)> {
    if state.a_c.len() != ps.n_c() || state.a_n.len() != ps.n_n() {
        return Err(Error::DimensionMismatch {
            what: "field state",
            expected: ps.n_c() + ps.n_n(),
            got: state.a_c.len() + state.a_n.len(),
        });
    }
    if let Some(limit) = ctx.dt_max {
        if dt > limit && !ctx.warned_dt {
            warn!("dt = {dt:e} s exceeds the CFL bound {limit:e} s; the run may diverge");
            ctx.warned_dt = true;
        }
    }
    let step = ctx.steps + 1;
    let (tol, max_it) = (cfg.tol_pcg, cfg.max_pcg_iter);
    let t1 = state.t + dt;
    let mut solves = Vec::with_capacity(3);

    let k_cc = ps.k_cc(&state.a_c);
    let j = ps.j_sn(t1);
    let j_norm = norm2(&j);
    let ks = solve_in(
        &mut ctx.source,
        &ps.k_nn,
        &j,
        tol,
        max_it,
        &ps.k_nn_pre,
        step,
        &mut solves,
    )?;

    let cached = ctx.coupling_cache.take().filter(|(a, _)| a == &state.a_c);
    let coupling_reused = cached.is_some();
    let kc = match cached {
        Some((_, k)) => k,
        None => {
            let r = ps.k_nc.spmv(&state.a_c)?;
            let tol_c = coupling_tol(tol, j_norm, &r);
            solve_in(
                &mut ctx.coupling,
                &ps.k_nn,
                &r,
                tol_c,
                max_it,
                &ps.k_nn_pre,
                step,
                &mut solves,
            )?
        }
    };

    // -K_cn K^# j - (K_cc a_c - K_cn K^# K_cn^T a_c) = -(K_cc a_c + K_cn a_n(a_c))
    let diff: Vec<f64> = ks.iter().zip(&kc).map(|(a, b)| a - b).collect();
    let mut rhs = ps.k_cn.spmv(&diff)?;
    axpy(1.0, &k_cc.spmv(&state.a_c)?, &mut rhs);
    rhs.iter_mut().for_each(|v| *v = -*v);
    drop(k_cc);

    let da = match cfg.mass_mode {
        MassMode::Lumped => rhs.iter().zip(&ps.m_cc_lumped).map(|(r, m)| r / m).collect(),
        MassMode::Consistent => solve_in(
            &mut ctx.mass,
            &ps.m_cc,
            &rhs,
            tol,
            max_it,
            &ps.m_cc_pre,
            step,
            &mut solves,
        )?,
    };
    let mut a_c = state.a_c.clone();
    axpy(dt, &da, &mut a_c);

    let r = ps.k_nc.spmv(&a_c)?;
    let tol_c = coupling_tol(tol, j_norm, &r);
    let kc1 = solve_in(
        &mut ctx.coupling,
        &ps.k_nn,
        &r,
        tol_c,
        max_it,
        &ps.k_nn_pre,
        step,
        &mut solves,
    )?;
    let a_n: Vec<f64> = ks.iter().zip(&kc1).map(|(a, b)| a - b).collect();
    ctx.coupling_cache = Some((a_c.clone(), kc1.clone()));
    ctx.steps = step;

    Ok((
        FieldState { t: t1, a_c, a_n },
        StepReport {
            step,
            t: t1,
            dt,
            solves,
            pinv_source: ks,
            pinv_coupling: kc1,
            coupling_reused,
        },
    ))
}

/// Relative violation of the algebraic constraint
/// `|K_cn^T a_c + K_nn a_n - j_s,n| / |j_s,n|`; `None` for a zero source.
pub fn constraint_residual(ps: &PartitionedSystem, state: &FieldState) -> Result<Option<f64>> {
    let j = ps.j_sn(state.t);
    let jn = norm2(&j);
    if jn == 0.0 {
        return Ok(None);
    }
    let mut r = ps.k_nc.spmv(&state.a_c)?;
    axpy(1.0, &ps.k_nn.spmv(&state.a_n)?, &mut r);
    axpy(-1.0, &j, &mut r);
    Ok(Some(norm2(&r) / jn))
}

/// Stability estimate `dt_max = safety * 2 / lambda_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CflEstimate {
    pub lambda_max: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Dominant eigenvector estimate; warm start for re-estimates.
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflOptions {
    pub safety: f64,
    /// Relative change of successive Rayleigh quotients at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub mass_mode: MassMode,
    pub seed: u64,
}

impl Default for CflOptions {
    fn default() -> Self {
        Self {
            safety: 0.9,
            tol: 1e-6,
            max_iter: 20_000,
            mass_mode: MassMode::Consistent,
            seed: DEFAULT_SEED,
        }
    }
}

/// `lambda_max` of `M_cc^{-1} S(a_c)` with consistent mass.
pub fn estimate_cfl(ps: &PartitionedSystem, a_c: &[f64], safety: f64, tol: f64) -> Result<CflEstimate> {
    estimate_cfl_with(
        ps,
        a_c,
        &CflOptions {
            safety,
            tol,
            ..Default::default()
        },
        None,
    )
}

/// Power iteration on the pencil `(S, M_cc)`: `y = M_cc^{-1} S x`, quotient
/// `x^T S x / x^T M_cc x`. Inner solves run one decade tighter than `tol`.
pub fn estimate_cfl_with(
    ps: &PartitionedSystem,
    a_c: &[f64],
    opts: &CflOptions,
    warm_start: Option<&[f64]>,
) -> Result<CflEstimate> {
    if !(opts.safety > 0.0 && opts.safety <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "CFL safety must lie in (0, 1], got {}",
            opts.safety
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "CFL tolerance must be > 0, got {}",
            opts.tol
        )));
    }
    let inner = (opts.tol * 0.1).max(1e-14);
    let max_it = 20 * (ps.n_n() + ps.n_c()).max(50);
    let k_cc = ps.k_cc(a_c).into_owned();
    let cfg = CspeConfig::default();
    let mut coupling = SolveContext::new(RhsFamily::Coupling, StartStrategy::Previous, ps.n_n(), &cfg)?;
    let mut mass = SolveContext::new(RhsFamily::Mass, StartStrategy::Previous, ps.n_c(), &cfg)?;
    let mut sink = Vec::new();

    let est = power_iteration_general(ps.n_c(), warm_start, opts.seed, opts.tol, opts.max_iter, |x, y| {
        let s = schur_apply(ps, &k_cc, x, inner, max_it, Some(&mut coupling))?;
        let (num, den, out) = match opts.mass_mode {
            MassMode::Lumped => {
                let den: f64 = x.iter().zip(&ps.m_cc_lumped).map(|(xi, m)| xi * xi * m).sum();
                let out: Vec<f64> = s.iter().zip(&ps.m_cc_lumped).map(|(si, m)| si / m).collect();
                (dot(x, &s), den, out)
            }
            MassMode::Consistent => {
                let mx = ps.m_cc.spmv(x)?;
                sink.clear();
                let out = solve_in(&mut mass, &ps.m_cc, &s, inner, max_it, &ps.m_cc_pre, 0, &mut sink)?;
                (dot(x, &s), dot(x, &mx), out)
            }
        };
        y.copy_from_slice(&out);
        Ok(num / den)
    })?;
    if !est.converged {
        warn!(
            "CFL power iteration not converged after {} iterations (lambda ~ {:e})",
            est.iterations, est.value
        );
    }
    Ok(CflEstimate {
        lambda_max: est.value,
        dt_max: opts.safety * 2.0 / est.value,
        safety: opts.safety,
        converged: est.converged,
        iterations: est.iterations,
        vector: est.vector,
    })
}

/// Per-run metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub steps: usize,
    pub dt_initial: f64,
    pub dt_final: f64,
    /// Solver loop only.
    pub wall_seconds: f64,
    pub avg_iters_source: f64,
    pub avg_iters_coupling: f64,
    pub avg_iters_mass: f64,
    /// Average over all pseudo-inverse (source and coupling) solves.
    pub avg_pcg_iters: f64,
    pub total_pcg_iterations: usize,
    pub max_subspace_cols: usize,
    pub cfl_rechecks: usize,
    pub lambda_max: Option<f64>,
    pub dt_max: Option<f64>,
    /// Worst relative constraint violation over the output samples.
    pub max_constraint_residual: f64,
    pub galerkin_samples: usize,
    pub galerkin_max: f64,
    /// `K v` products spent on subspace updates, and accepted updates.
    pub subspace_products: usize,
    pub subspace_accepted: usize,
    pub final_probes: Vec<f64>,
}

impl RunReport {
    pub(crate) fn fill_solver_stats(&mut self, ctx: &CspeContext) {
        let (s, c, m) = (&ctx.source.stats, &ctx.coupling.stats, &ctx.mass.stats);
        self.avg_iters_source = s.average_iterations();
        self.avg_iters_coupling = c.average_iterations();
        self.avg_iters_mass = m.average_iterations();
        let pinv_solves = s.solves + c.solves;
        self.avg_pcg_iters = if pinv_solves == 0 {
            0.0
        } else {
            (s.iterations + c.iterations) as f64 / pinv_solves as f64
        };
        self.total_pcg_iterations = s.iterations + c.iterations + m.iterations;
        self.max_subspace_cols = s.max_subspace_cols.max(c.max_subspace_cols).max(m.max_subspace_cols);
        for f in ctx.families() {
            self.galerkin_samples += f.galerkin.samples;
            self.galerkin_max = self.galerkin_max.max(f.galerkin.max_relative);
            self.subspace_products += f.subspace.product_count();
            self.subspace_accepted += f.subspace.accepted_updates();
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: RunReport,
    pub final_state: FieldState,
    pub step_rows: Vec<StepRow>,
}

pub(crate) fn sample(sys: &crate::problem::DiscreteSystem, a: &[f64], probes: &[Probe]) -> Result<Vec<f64>> {
    probes.iter().map(|p| probe_flux(sys, a, p)).collect()
}

/// Integrates from `state0` to `t_end` with explicit Euler steps.
///
/// The last step is shortened to land on `t_end`. Probes are sampled at the
/// start, every `output_stride` steps and at the end, together with the
/// constraint residual. For nonlinear materials the CFL bound is
/// re-estimated every `cfl_recheck_interval` steps and `dt` shrinks to it.
pub fn integrate(
    ps: &PartitionedSystem,
    state0: FieldState,
    t_end: f64,
    cfg: &StepperConfig,
    ctx: &mut CspeContext,
    probes: &[Probe],
) -> Result<RunOutput> {
    cfg.validate()?;
    let names = probes.iter().map(|p| p.name.clone()).collect();
    let mut out = RunOutput {
        trajectory: Trajectory::new(names),
        report: RunReport {
            dt_initial: cfg.dt,
            dt_final: cfg.dt,
            ..Default::default()
        },
        final_state: state0,
        step_rows: Vec::new(),
    };
    if !(t_end > out.final_state.t) {
        return Ok(out);
    }

    let started = Instant::now();
    let mut dt = cfg.dt;
    let mut state = std::mem::replace(&mut out.final_state, FieldState::zero(ps));
    let check_cfl = !ps.is_linear() && cfg.cfl_recheck_interval > 0;
    let cfl_opts = CflOptions {
        safety: cfg.cfl_safety,
        tol: cfg.cfl_tol,
        mass_mode: cfg.mass_mode,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut warm: Option<Vec<f64>> = None;
    let (mut anchor_t, mut anchor_k) = (state.t, 0usize);

    let record = |out: &mut RunOutput, state: &FieldState| -> Result<()> {
        let global = state.to_global(ps);
        out.trajectory.push(state.t, sample(&ps.system, &global, probes)?);
        if let Some(r) = constraint_residual(ps, state)? {
            out.report.max_constraint_residual = out.report.max_constraint_residual.max(r);
        }
        Ok(())
    };
    record(&mut out, &state)?;

    let mut k = 0usize;
    while state.t < t_end {
        if check_cfl && k.is_multiple_of(cfg.cfl_recheck_interval) {
            let est = estimate_cfl_with(ps, &state.a_c, &cfl_opts, warm.as_deref())?;
            out.report.cfl_rechecks += 1;
            out.report.lambda_max = Some(est.lambda_max);
            out.report.dt_max = Some(est.dt_max);
            ctx.set_dt_max(est.dt_max);
            if dt > est.dt_max {
                debug!(
                    "step {k}: dt {dt:e} -> {:e} (lambda_max {:e})",
                    est.dt_max, est.lambda_max
                );
                dt = est.dt_max;
                (anchor_t, anchor_k) = (state.t, k);
            }
            warm = Some(est.vector);
        }
        let mut t_next = anchor_t + (k + 1 - anchor_k) as f64 * dt;
        if t_next > t_end || t_end - t_next < 1e-9 * dt {
            t_next = t_end;
        }
        let (next, rep) = step_with_dt(ps, &state, t_next - state.t, cfg, ctx)?;
        state = FieldState { t: t_next, ..next };
        k += 1;

        let norm = norm_inf(&state.a_c);
        if !all_finite(&state.a_c) || !all_finite(&state.a_n) {
            return Err(Error::Instability {
                step: k,
                t: state.t,
                norm: f64::INFINITY,
                scale: ctx.instability_scale.unwrap_or(0.0),
            });
        }
        match ctx.instability_scale {
            None if norm > 0.0 => ctx.instability_scale = Some(norm),
            Some(scale) if norm > INSTABILITY_FACTOR * scale => {
                return Err(Error::Instability {
                    step: k,
                    t: state.t,
                    norm,
                    scale,
                })
            }
            _ => {}
        }
        if cfg.record_steps {
            out.step_rows.extend(rep.solves.iter().map(|&solve| StepRow {
                step: rep.step,
                t: rep.t,
                solve,
            }));
        }
        if k.is_multiple_of(cfg.output_stride) || state.t >= t_end {
            record(&mut out, &state)?;
        }
    }

    out.report.wall_seconds = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    out.report.steps = k;
    out.report.dt_final = dt;
    out.report.fill_solver_stats(ctx);
    out.report.final_probes = out.trajectory.last().map(<[f64]>::to_vec).unwrap_or_default();
    out.final_state = state;
    Ok(out)
}
