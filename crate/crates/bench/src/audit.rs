//! CSPE cache audit: runs the explicit solver with Galerkin checks enabled
//! and recomputes every family's cached subspace from scratch at the end.

use std::fmt::Write as _;

use mqs_core::cspe::{subspace_audit, SubspaceAudit};
use mqs_core::schur::{integrate, CspeContext, FieldState, RhsFamily, RunReport, StepperConfig};

use crate::config::{RunConfig, SolverKind};
use crate::error::{BenchError, Result};
use crate::model::Problem;
use crate::runner::{resolve_dt, stepper_for};

pub const AUDIT_FILE: &str = "audit.txt";
/// Pass threshold for cache deviations and Galerkin residuals.
pub const AUDIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyAudit {
    pub family: RhsFamily,
    pub audit: SubspaceAudit,
    pub product_count: usize,
    pub accepted_updates: usize,
    pub galerkin_samples: usize,
    pub galerkin_max: f64,
}

impl FamilyAudit {
    pub fn passes(&self) -> bool {
        self.audit.passes(AUDIT_TOL) && self.product_count == self.accepted_updates && self.galerkin_max <= AUDIT_TOL
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub families: Vec<FamilyAudit>,
    pub run: RunReport,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.families.iter().all(FamilyAudit::passes)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps = {}", self.run.steps);
        for f in &self.families {
            let a = &f.audit;
            let _ = writeln!(
                s,
                "{}: cols {}, products {}, accepted {}, orthonormality {:.3e}, w {:.3e}, g {:.3e}, g_asym {:.3e}, galerkin {} samples max {:.3e}",
                f.family,
                a.n_cols,
                f.product_count,
                f.accepted_updates,
                a.orthonormality,
                a.w_deviation,
                a.g_deviation,
                a.g_asymmetry,
                f.galerkin_samples,
                f.galerkin_max
            );
        }
        let _ = writeln!(s, "{} (tol {AUDIT_TOL:e})", if self.passes() { "PASS" } else { "FAIL" });
        s
    }
}

pub fn run_audit(cfg: &RunConfig, problem: &Problem) -> Result<AuditReport> {
    if cfg.solver != SolverKind::ExplicitSchur || !cfg.stepper.cspe_enabled {
        return Err(BenchError::Usage(format!(
            "{}: audit needs solver.kind = explicit_schur with stepper.cspe = true",
            cfg.source_path.display()
        )));
    }
    let base = stepper_for(cfg, 1.0);
    let dt = resolve_dt(cfg.dt, problem.initial_cfl(&base)?.dt_max);
    let s = StepperConfig {
        dt,
        galerkin_audit: true,
        record_steps: false,
        ..base
    };
    let ps = &problem.ps;
    let mut ctx = CspeContext::new(ps, &s)?;
    let out = integrate(
        ps,
        FieldState::zero(ps),
        cfg.t_end,
        &s,
        &mut ctx,
        &problem.system.probes,
    )?;
    let families = ctx
        .families()
        .into_iter()
        .map(|f| {
            let audit = match f.family {
                RhsFamily::Mass => subspace_audit(&f.subspace, &ps.m_cc),
                RhsFamily::Source | RhsFamily::Coupling => subspace_audit(&f.subspace, &ps.k_nn),
            };
            FamilyAudit {
                family: f.family,
                audit,
                product_count: f.subspace.product_count(),
                accepted_updates: f.subspace.accepted_updates(),
                galerkin_samples: f.galerkin.samples,
                galerkin_max: f.galerkin.max_relative,
            }
        })
        .collect();
    Ok(AuditReport {
        families,
        run: out.report,
    })
}
