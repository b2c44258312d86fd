//! Tolerance sweep: one explicit CSPE run per `(tol_pcg, n_cg_acc)` cell and
//! two CSPE-free baselines, all on one shared problem and one time step.

use std::path::Path;

use log::{info, warn};
use mqs_core::cspe::StartStrategy;
use mqs_core::schur::{integrate, CspeContext, FieldState, RunReport, StepperConfig};
use rayon::prelude::*;

use crate::config::{fmt_f, RunConfig, SolverKind};
use crate::error::{BenchError, Result};
use crate::model::Problem;
use crate::runner::{resolve_dt, stepper_for};

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Cspe,
    BaselinePrevious,
    BaselineZero,
}

impl RunKind {
    pub fn name(&self) -> &'static str {
        match self {
            RunKind::Cspe => "cspe",
            RunKind::BaselinePrevious => "baseline_previous",
            RunKind::BaselineZero => "baseline_zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub kind: RunKind,
    pub tol_pcg: f64,
    /// `None` for baselines, which never build a subspace.
    pub n_cg_acc: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub run: usize,
    pub cell: SweepCell,
    pub outcome: std::result::Result<RunReport, String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub dt: f64,
    pub probe_names: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Grid cells in row-major order (tolerance outer), then the baselines at
/// `stepper.tol_pcg`.
pub fn cells(cfg: &RunConfig) -> Vec<SweepCell> {
    let mut out = Vec::new();
    for &tol_pcg in &cfg.sweep.tol_pcg {
        for &acc in &cfg.sweep.n_cg_acc {
            out.push(SweepCell {
                kind: RunKind::Cspe,
                tol_pcg,
                n_cg_acc: Some(acc),
            });
        }
    }
    for kind in [RunKind::BaselinePrevious, RunKind::BaselineZero] {
        out.push(SweepCell {
            kind,
            tol_pcg: cfg.stepper.tol_pcg,
            n_cg_acc: None,
        });
    }
    out
}

fn cell_stepper(base: &StepperConfig, cell: &SweepCell) -> StepperConfig {
    let mut s = StepperConfig {
        tol_pcg: cell.tol_pcg,
        record_steps: false,
        ..base.clone()
    };
    match cell.kind {
        RunKind::Cspe => {
            s.cspe_enabled = true;
            s.n_cg_acc = cell.n_cg_acc.expect("grid cells carry n_cg_acc");
        }
        RunKind::BaselinePrevious => {
            s.cspe_enabled = false;
            s.baseline_start = StartStrategy::Previous;
        }
        RunKind::BaselineZero => {
            s.cspe_enabled = false;
            s.baseline_start = StartStrategy::Zero;
        }
    }
    s
}

/// Runs all cells; a failing cell is recorded and the others proceed.
/// Cells run on the current rayon pool; rows keep the cell order.
pub fn run_sweep(cfg: &RunConfig, problem: &Problem) -> Result<SweepReport> {
    if cfg.solver != SolverKind::ExplicitSchur {
        return Err(BenchError::Usage(format!(
            "{}: sweep runs the explicit solver, solver.kind must be explicit_schur",
            cfg.source_path.display()
        )));
    }
    let base = stepper_for(cfg, 1.0);
    let cfl = problem.initial_cfl(&base)?;
    let dt = resolve_dt(cfg.dt, cfl.dt_max);
    let base = StepperConfig { dt, ..base };
    let ps = &problem.ps;
    let probes = &problem.system.probes;
    let cells = cells(cfg);
    info!("sweep: {} runs at dt {:e}", cells.len(), dt);
    let rows: Vec<SweepRow> = cells
        .into_par_iter()
        .enumerate()
        .map(|(run, cell)| {
            let s = cell_stepper(&base, &cell);
            let outcome = CspeContext::new(ps, &s)
                .and_then(|mut ctx| integrate(ps, FieldState::zero(ps), cfg.t_end, &s, &mut ctx, probes))
                .map(|o| o.report)
                .map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                warn!("sweep run {run} ({}, tol {:e}): {e}", cell.kind.name(), cell.tol_pcg);
            }
            SweepRow { run, cell, outcome }
        })
        .collect();
    Ok(SweepReport {
        dt,
        probe_names: probes.iter().map(|p| p.name.clone()).collect(),
        rows,
    })
}

impl SweepReport {
    pub fn baseline(&self, kind: RunKind) -> Option<&RunReport> {
        self.rows
            .iter()
            .find(|r| r.cell.kind == kind)
            .and_then(|r| r.outcome.as_ref().ok())
    }

    /// First successful grid cell with the smallest tolerance.
    pub fn reference(&self) -> Option<&RunReport> {
        let tightest = self
            .rows
            .iter()
            .filter(|r| r.cell.kind == RunKind::Cspe)
            .map(|r| r.cell.tol_pcg)
            .fold(f64::INFINITY, f64::min);
        self.rows
            .iter()
            .filter(|r| r.cell.kind == RunKind::Cspe && r.cell.tol_pcg == tightest)
            .find_map(|r| r.outcome.as_ref().ok())
    }

    /// `avg_pcg_iters` of a run over that of the previous-solution baseline.
    pub fn ratio_vs_previous(&self, report: &RunReport) -> Option<f64> {
        let b = self.baseline(RunKind::BaselinePrevious)?;
        (b.avg_pcg_iters > 0.0).then(|| report.avg_pcg_iters / b.avg_pcg_iters)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "run",
            "kind",
            "tol_pcg",
            "n_cg_acc",
            "status",
            "steps",
            "dt",
            "avg_iters_source",
            "avg_iters_coupling",
            "avg_iters_mass",
            "avg_pcg_iters",
            "total_pcg_iterations",
            "max_subspace_cols",
            "max_constraint_residual",
            "iter_ratio_vs_previous",
            "wall_seconds",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.probe_names.iter().map(|p| format!("final_{p}")));
        h.extend(self.probe_names.iter().map(|p| format!("rel_delta_{p}")));
        h
    }

    /// CSV records; failed runs carry `error: <message>` and empty metrics.
    pub fn records(&self) -> Vec<Vec<String>> {
        let reference = self.reference();
        self.rows
            .iter()
            .map(|row| {
                let mut rec = vec![
                    row.run.to_string(),
                    row.cell.kind.name().to_string(),
                    fmt_f(row.cell.tol_pcg),
                    row.cell.n_cg_acc.map(|a| a.to_string()).unwrap_or_default(),
                ];
                match &row.outcome {
                    Err(e) => {
                        rec.push(format!("error: {e}"));
                        let blanks = self.header().len() - rec.len();
                        rec.extend(std::iter::repeat_n(String::new(), blanks));
                    }
                    Ok(r) => {
                        rec.push("ok".into());
                        rec.push(r.steps.to_string());
                        rec.push(fmt_f(self.dt));
                        rec.push(fmt_f(r.avg_iters_source));
                        rec.push(fmt_f(r.avg_iters_coupling));
                        rec.push(fmt_f(r.avg_iters_mass));
                        rec.push(fmt_f(r.avg_pcg_iters));
                        rec.push(r.total_pcg_iterations.to_string());
                        rec.push(r.max_subspace_cols.to_string());
                        rec.push(fmt_f(r.max_constraint_residual));
                        rec.push(self.ratio_vs_previous(r).map(fmt_f).unwrap_or_default());
                        rec.push(fmt_f(r.wall_seconds));
                        rec.extend(r.final_probes.iter().map(|v| fmt_f(*v)));
                        for (p, v) in r.final_probes.iter().enumerate() {
                            let d = reference
                                .and_then(|rf| rf.final_probes.get(p))
                                .map(|rv| relative_delta(*v, *rv));
                            rec.push(d.map(fmt_f).unwrap_or_default());
                        }
                    }
                }
                rec
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| BenchError::from(mqs_core::Error::Csv(e.to_string()));
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.header()).map_err(csv_err)?;
        for rec in self.records() {
            w.write_record(rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| BenchError::io(path, e))
    }
}

/// `(v - reference) / |reference|`, absolute when the reference is zero.
pub fn relative_delta(v: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        v
    } else {
        (v - reference) / reference.abs()
    }
}
