//! Single runs and their artifacts: `trajectory.csv`, `steps.csv` and
//! `metadata.txt` in the output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use log::info;
use mqs_core::implicit::{integrate_implicit, ImplicitReport};
use mqs_core::schur::{integrate, CspeContext, FieldState, RunReport, StepperConfig};
use mqs_core::trajectory::{write_step_report_csv, StepRow, Trajectory};

use crate::config::{fmt_f, DtSpec, RunConfig, SolverKind};
use crate::error::{BenchError, Result};
use crate::model::Problem;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const METADATA_FILE: &str = "metadata.txt";

#[derive(Debug, Clone)]
pub enum SolverReport {
    Explicit(RunReport),
    Implicit(ImplicitReport),
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trajectory: Trajectory,
    /// Explicit runs only; implicit step rows are derived from the report.
    pub step_rows: Vec<StepRow>,
    pub report: SolverReport,
    pub dt: f64,
    /// Bound at the initial state.
    pub lambda_max: f64,
    pub dt_max: f64,
    /// Global dof vector at `t_end`.
    pub final_state: Vec<f64>,
}

impl RunArtifacts {
    /// Bound in force at the end of the run; rechecks can only lower it.
    pub fn final_dt_max(&self) -> f64 {
        match &self.report {
            SolverReport::Explicit(r) => r.dt_max.unwrap_or(self.dt_max),
            SolverReport::Implicit(_) => self.dt_max,
        }
    }

    pub fn wall_seconds(&self) -> f64 {
        match &self.report {
            SolverReport::Explicit(r) => r.wall_seconds,
            SolverReport::Implicit(r) => r.wall_seconds,
        }
    }
}

/// Explicit stepper settings with the resolved time step.
pub fn stepper_for(cfg: &RunConfig, dt: f64) -> StepperConfig {
    StepperConfig {
        dt,
        seed: cfg.seed,
        output_stride: cfg.output_stride,
        ..cfg.stepper.clone()
    }
}

pub fn resolve_dt(spec: DtSpec, dt_max: f64) -> f64 {
    match spec {
        DtSpec::Fixed(dt) => dt,
        DtSpec::Auto { factor } => factor * dt_max,
    }
}

pub fn execute(cfg: &RunConfig, problem: &Problem) -> Result<RunArtifacts> {
    let cfl = problem.initial_cfl(&stepper_for(cfg, 1.0))?;
    let dt = resolve_dt(cfg.dt, cfl.dt_max);
    info!(
        "lambda_max {:e}, dt_max {:e}, dt {:e}, {} conductive / {} air dofs",
        cfl.lambda_max,
        cfl.dt_max,
        dt,
        problem.ps.n_c(),
        problem.ps.n_n()
    );
    let sys = &problem.system;
    let (trajectory, step_rows, report, final_state) = match cfg.solver {
        SolverKind::ExplicitSchur => {
            let stepper = stepper_for(cfg, dt);
            let mut ctx = CspeContext::new(&problem.ps, &stepper)?;
            let out = integrate(
                &problem.ps,
                FieldState::zero(&problem.ps),
                cfg.t_end,
                &stepper,
                &mut ctx,
                &sys.probes,
            )?;
            info!(
                "{} steps, avg PCG iterations {:.3}, max subspace {} columns, {:.3} s",
                out.report.steps, out.report.avg_pcg_iters, out.report.max_subspace_cols, out.report.wall_seconds
            );
            let a = out.final_state.to_global(&problem.ps);
            (out.trajectory, out.step_rows, SolverReport::Explicit(out.report), a)
        }
        SolverKind::ImplicitEuler => {
            let a0 = vec![0.0; sys.n_dofs()];
            let out = integrate_implicit(
                sys,
                &a0,
                0.0,
                cfg.t_end,
                dt,
                &cfg.newton,
                &sys.probes,
                cfg.output_stride,
            )?;
            info!(
                "{} steps, {} Newton / {} PCG iterations, {:.3} s",
                out.report.steps,
                out.report.total_newton_iterations,
                out.report.total_linear_iterations,
                out.report.wall_seconds
            );
            (
                out.trajectory,
                Vec::new(),
                SolverReport::Implicit(out.report),
                out.final_state,
            )
        }
    };
    Ok(RunArtifacts {
        trajectory,
        step_rows,
        report,
        dt,
        lambda_max: cfl.lambda_max,
        dt_max: cfl.dt_max,
        final_state,
    })
}

pub fn write_artifacts(cfg: &RunConfig, art: &RunArtifacts, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    art.trajectory.write_csv(out.join(TRAJECTORY_FILE))?;
    match &art.report {
        SolverReport::Explicit(_) => write_step_report_csv(out.join(STEPS_FILE), &art.step_rows)?,
        SolverReport::Implicit(r) => write_newton_steps(&out.join(STEPS_FILE), r, cfg.t_end)?,
    }
    let path = out.join(METADATA_FILE);
    fs::write(&path, metadata(cfg, art)).map_err(|e| BenchError::io(&path, e))
}

/// Implicit runs use the step-report schema with `rhs_family = newton`:
/// `pcg_iters` is the PCG total of the step, `subspace_cols` is 0.
fn write_newton_steps(path: &Path, r: &ImplicitReport, t_end: f64) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| BenchError::from(mqs_core::Error::Csv(e.to_string()));
    w.write_record(["step", "t", "rhs_family", "pcg_iters", "subspace_cols"])
        .map_err(csv_err)?;
    for (k, iters) in r.linear_iterations.iter().enumerate() {
        // same time grid as the implicit integrator
        let mut t = (k + 1) as f64 * r.dt;
        if t > t_end || t_end - t < 1e-9 * r.dt {
            t = t_end;
        }
        w.write_record([
            (k + 1).to_string(),
            fmt_f(t),
            "newton".into(),
            iters.to_string(),
            "0".into(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| BenchError::io(path, e.into_error()))?
        .flush()
        .map_err(|e| BenchError::io(path, e))
}

/// Resolved configuration followed by `derived.*` results; reads back as a
/// configuration because the parser skips derived keys.
pub fn metadata(cfg: &RunConfig, art: &RunArtifacts) -> String {
    let mut s = String::new();
    for (k, v) in cfg.canonical_entries() {
        let _ = writeln!(s, "{k} = {v}");
    }
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "derived.{k} = {v}");
    };
    put("version", crate::VERSION.into());
    put("lambda_max", fmt_f(art.lambda_max));
    put("dt_max", fmt_f(art.final_dt_max()));
    put("dt", fmt_f(art.dt));
    match &art.report {
        SolverReport::Explicit(r) => {
            put("steps", r.steps.to_string());
            put("dt_final", fmt_f(r.dt_final));
            put("cfl_rechecks", r.cfl_rechecks.to_string());
            put("avg_pcg_iters", fmt_f(r.avg_pcg_iters));
            put("avg_iters_source", fmt_f(r.avg_iters_source));
            put("avg_iters_coupling", fmt_f(r.avg_iters_coupling));
            put("avg_iters_mass", fmt_f(r.avg_iters_mass));
            put("total_pcg_iterations", r.total_pcg_iterations.to_string());
            put("max_subspace_cols", r.max_subspace_cols.to_string());
            put("max_constraint_residual", fmt_f(r.max_constraint_residual));
            put("wall_seconds", fmt_f(r.wall_seconds));
        }
        SolverReport::Implicit(r) => {
            put("steps", r.steps.to_string());
            put("total_newton_iterations", r.total_newton_iterations.to_string());
            put("total_linear_iterations", r.total_linear_iterations.to_string());
            put(
                "max_newton_iterations",
                r.newton_iterations.iter().max().copied().unwrap_or(0).to_string(),
            );
            put("wall_seconds", fmt_f(r.wall_seconds));
        }
    }
    s
}

/// `run`: build, integrate, write artifacts.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunArtifacts> {
    let problem = Problem::build(cfg)?;
    let art = execute(cfg, &problem)?;
    write_artifacts(cfg, &art, out)?;
    Ok(art)
}
