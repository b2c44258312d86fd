use std::cell::Cell;
use std::sync::Arc;

use mqs_core::cspe::{subspace_audit, AppendRule, CspeConfig, SolveContext, StartStrategy};
use mqs_core::problem::{
    build_plate_model_2d, partition, MaterialModel, PartitionedSystem, PlateGeometry, SourceWaveform,
};
use mqs_core::schur::{
    estimate_cfl, explicit_euler_step, integrate, CspeContext, FieldState, RhsFamily, RunReport, StepperConfig,
};
use mqs_core::sparse::{pcg, LinearOperator};

fn plate() -> PartitionedSystem {
    let sys = build_plate_model_2d(
        24,
        24,
        &PlateGeometry::default(),
        7.5e6,
        MaterialModel::brauer_default(),
        SourceWaveform::new(2e7, 2e-3).unwrap(),
    )
    .unwrap();
    partition(Arc::new(sys)).unwrap()
}

/// Counts operator applications independently of the subspace bookkeeping.
struct Counting<'a, A: LinearOperator> {
    inner: &'a A,
    calls: Cell<usize>,
}

impl<A: LinearOperator> LinearOperator for Counting<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.calls.set(self.calls.get() + 1);
        self.inner.apply(x, y);
    }
}

#[test]
fn one_product_per_accepted_update_on_a_real_sequence() {
    let ps = plate();
    let est = estimate_cfl(&ps, &vec![0.0; ps.n_c()], 0.9, 1e-6).unwrap();
    let cfg = StepperConfig::new(est.dt_max);
    let mut run = CspeContext::new(&ps, &cfg).unwrap();
    let mut state = FieldState::zero(&ps);
    let mut rhs = Vec::new();
    for _ in 0..300 {
        state = explicit_euler_step(&ps, &state, &cfg, &mut run).unwrap().0;
        rhs.push(ps.k_nc.spmv(&state.a_c).unwrap());
    }

    let ccfg = CspeConfig::default();
    let mut ctx = SolveContext::new(RhsFamily::Coupling, StartStrategy::Cspe, ps.n_n(), &ccfg).unwrap();
    let counting = Counting {
        inner: &ps.k_nn,
        calls: Cell::new(0),
    };
    for r in &rhs {
        let x0 = ctx.start_vector(r, &ps.k_nn).unwrap();
        let (x, rep) = pcg(&ps.k_nn, r, &x0, 1e-6, 10_000, &ps.k_nn_pre).unwrap();
        assert!(rep.converged);
        ctx.record(&x, &rep, &counting);
    }
    let sub = &ctx.subspace;
    assert_eq!(counting.calls.get(), sub.accepted_updates());
    assert_eq!(sub.product_count(), sub.accepted_updates());
    assert!(sub.accepted_updates() <= rhs.len());
    assert_eq!(sub.appended() + sub.replaced(), sub.accepted_updates());
    assert_eq!(sub.accepted_updates() + sub.rejected(), rhs.len());
    let audit = subspace_audit(sub, &ps.k_nn);
    assert!(audit.passes(1e-10), "{audit:?}");
}

fn run(ps: &PartitionedSystem, cspe: bool, start: StartStrategy, rule: AppendRule) -> RunReport {
    let est = estimate_cfl(ps, &vec![0.0; ps.n_c()], 0.9, 1e-6).unwrap();
    let mut cfg = StepperConfig::new(est.dt_max);
    cfg.cspe_enabled = cspe;
    cfg.baseline_start = start;
    cfg.append_rule = rule;
    cfg.galerkin_audit = cspe;
    cfg.output_stride = 50;
    let mut ctx = CspeContext::new(ps, &cfg).unwrap();
    integrate(ps, FieldState::zero(ps), 3e-3, &cfg, &mut ctx, &ps.system.probes)
        .unwrap()
        .report
}

#[test]
fn cspe_beats_both_baselines() {
    let ps = plate();
    let cspe = run(&ps, true, StartStrategy::Previous, AppendRule::Conjunctive);
    let prev = run(&ps, false, StartStrategy::Previous, AppendRule::Conjunctive);
    let zero = run(&ps, false, StartStrategy::Zero, AppendRule::Conjunctive);
    assert_eq!(cspe.steps, prev.steps);
    assert!(cspe.total_pcg_iterations as f64 <= 1.05 * prev.total_pcg_iterations as f64);
    assert!(
        cspe.avg_pcg_iters <= 0.5 * prev.avg_pcg_iters,
        "cspe {} vs previous {}",
        cspe.avg_pcg_iters,
        prev.avg_pcg_iters
    );
    assert!(prev.avg_pcg_iters <= zero.avg_pcg_iters);
    assert!(cspe.max_subspace_cols >= 1 && cspe.max_subspace_cols <= 32);
    assert_eq!(prev.max_subspace_cols, 0);
    assert_eq!(cspe.subspace_products, cspe.subspace_accepted);
    assert!(cspe.galerkin_samples > 0);
    assert!(cspe.galerkin_max <= 1e-10, "{:e}", cspe.galerkin_max);
}

#[test]
fn threshold_only_rule_respects_the_cap() {
    let ps = plate();
    let r = run(&ps, true, StartStrategy::Previous, AppendRule::ThresholdOnly);
    assert!(r.max_subspace_cols <= 32);
    assert_eq!(r.subspace_products, r.subspace_accepted);
    assert!(r.galerkin_max <= 1e-10);
}
