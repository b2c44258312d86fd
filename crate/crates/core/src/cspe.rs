//! Subspace projection extrapolation (SPE) start vectors with the cascaded
//! (CSPE) update policy.
//!
//! A [`SubspaceOperator`] keeps orthonormal columns `V` spanning previous
//! solutions of one right-hand-side family, the cached products `W = K V`
//! and `G = V^T W`. A new start vector is the Galerkin solution `x0 = V z`,
//! `G z = V^T r`. Each accepted update costs exactly one product `K v`.

use crate::error::{Error, Result};
use crate::schur::RhsFamily;
use crate::sparse::vec::{dot, norm2};
use crate::sparse::{dense_solve, mgs_orthonormalize, DenseMatrix, LinearOperator, PcgReport, DEFAULT_DROP_TOL};

/// Interaction of the iteration-increase rule with the `n_cg_acc` gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AppendRule {
    /// Append iff the iteration count rose AND exceeds `n_cg_acc`.
    #[default]
    Conjunctive,
    /// Append iff the iteration count exceeds `n_cg_acc`.
    ThresholdOnly,
}

/// Start vector of an inner PCG solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartStrategy {
    Zero,
    /// Solution of the previous solve of the same family.
    Previous,
    /// Galerkin projection onto the CSPE subspace.
    Cspe,
}

/// What an update did to the subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Appended,
    Replaced,
    /// Dependent on `V` (or zero); nothing changed.
    Rejected,
}

/// CSPE state for one right-hand-side family.
#[derive(Debug, Clone)]
pub struct SubspaceOperator {
    n: usize,
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    g: DenseMatrix,
    /// `(previous, last)` PCG iteration counts of accepted updates.
    iter_history: (Option<usize>, Option<usize>),
    n_cg_acc: usize,
    max_cols: usize,
    drop_tol: f64,
    rule: AppendRule,
    products: usize,
    appended: usize,
    replaced: usize,
    rejected: usize,
}

impl SubspaceOperator {
    pub fn new(n: usize, n_cg_acc: usize, max_cols: usize) -> Result<Self> {
        if max_cols == 0 {
            return Err(Error::InvalidParameter("max_subspace must be >= 1".into()));
        }
        Ok(Self {
            n,
            v: Vec::new(),
            w: Vec::new(),
            g: DenseMatrix::zeros(0),
            iter_history: (None, None),
            n_cg_acc,
            max_cols,
            drop_tol: DEFAULT_DROP_TOL,
            rule: AppendRule::default(),
            products: 0,
            appended: 0,
            replaced: 0,
            rejected: 0,
        })
    }

    pub fn with_rule(mut self, rule: AppendRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_drop_tol(mut self, drop_tol: f64) -> Self {
        self.drop_tol = drop_tol;
        self
    }

    /// Seeds the iteration history, e.g. to replay a recorded sequence.
    pub fn with_history(mut self, previous: Option<usize>, last: Option<usize>) -> Self {
        self.iter_history = (previous, last);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of columns `m`.
    pub fn n_cols(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn max_cols(&self) -> usize {
        self.max_cols
    }

    pub fn n_cg_acc(&self) -> usize {
        self.n_cg_acc
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn products(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn projected(&self) -> &DenseMatrix {
        &self.g
    }

    pub fn iter_history(&self) -> (Option<usize>, Option<usize>) {
        self.iter_history
    }

    /// Operator-column products computed so far.
    pub fn product_count(&self) -> usize {
        self.products
    }

    /// Updates that changed the subspace (appended + replaced).
    pub fn accepted_updates(&self) -> usize {
        self.appended + self.replaced
    }

    pub fn appended(&self) -> usize {
        self.appended
    }

    pub fn replaced(&self) -> usize {
        self.replaced
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Builds a subspace from explicit columns (orthonormalized in order),
    /// computing `W` and `G` from scratch.
    pub fn from_columns<A: LinearOperator + ?Sized>(
        cols: &[Vec<f64>],
        op: &A,
        n_cg_acc: usize,
        max_cols: usize,
    ) -> Result<Self> {
        let mut sub = Self::new(op.dim(), n_cg_acc, max_cols)?;
        for c in cols {
            if sub.v.len() == max_cols {
                break;
            }
            if let Some(v) = mgs_orthonormalize(&sub.v, c, sub.drop_tol) {
                sub.push_column(v, op);
            }
        }
        Ok(sub)
    }

    fn product<A: LinearOperator + ?Sized>(&mut self, op: &A, v: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        op.apply(v, &mut w);
        self.products += 1;
        w
    }

    fn push_column<A: LinearOperator + ?Sized>(&mut self, v: Vec<f64>, op: &A) {
        let w = self.product(op, &v);
        let m = self.v.len();
        self.g.grow();
        for i in 0..m {
            let gij = dot(&self.v[i], &w);
            self.g.set(i, m, gij);
            self.g.set(m, i, gij);
        }
        self.g.set(m, m, dot(&v, &w));
        self.v.push(v);
        self.w.push(w);
    }

    fn replace_last<A: LinearOperator + ?Sized>(&mut self, v: Vec<f64>, op: &A) {
        let w = self.product(op, &v);
        let k = self.v.len() - 1;
        for i in 0..k {
            let gik = dot(&self.v[i], &w);
            self.g.set(i, k, gik);
            self.g.set(k, i, gik);
        }
        self.g.set(k, k, dot(&v, &w));
        self.v[k] = v;
        self.w[k] = w;
    }

    fn wants_append(&self) -> bool {
        if self.v.is_empty() {
            return true;
        }
        if self.v.len() >= self.max_cols {
            return false;
        }
        let last = self.iter_history.1.unwrap_or(0);
        let above_gate = last > self.n_cg_acc;
        match self.rule {
            AppendRule::Conjunctive => above_gate && last > self.iter_history.0.unwrap_or(0),
            AppendRule::ThresholdOnly => above_gate,
        }
    }
}

/// Galerkin start vector `x0 = V z` with `G z = V^T r`; zero for empty `V`.
pub fn spe_start_vector(sub: &SubspaceOperator, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != sub.n {
        return Err(Error::DimensionMismatch {
            what: "SPE right-hand side",
            expected: sub.n,
            got: r.len(),
        });
    }
    let mut x0 = vec![0.0; sub.n];
    if sub.v.is_empty() {
        return Ok(x0);
    }
    let vtr: Vec<f64> = sub.v.iter().map(|v| dot(v, r)).collect();
    if vtr.iter().all(|&c| c == 0.0) {
        return Ok(x0);
    }
    let z =
        dense_solve(&sub.g, &vtr).map_err(|e| Error::DegenerateSubspace(format!("{} columns: {e}", sub.v.len())))?;
    for (v, &zi) in sub.v.iter().zip(&z) {
        for (x, &vi) in x0.iter_mut().zip(v) {
            *x += zi * vi;
        }
    }
    Ok(x0)
}

/// Folds a converged solution into the subspace.
///
/// The solution is first tested against all of `V`; a dependent solution
/// leaves the subspace untouched. An append orthonormalizes against all
/// columns, a replacement against all but the last, so the newest solution
/// always lies in `span(V)`.
pub fn cspe_update<A: LinearOperator + ?Sized>(
    sub: &mut SubspaceOperator,
    new_solution: &[f64],
    last_iters: usize,
    op: &A,
) -> UpdateOutcome {
    let Some(v_full) = mgs_orthonormalize(&sub.v, new_solution, sub.drop_tol) else {
        sub.rejected += 1;
        return UpdateOutcome::Rejected;
    };
    sub.iter_history = (sub.iter_history.1, Some(last_iters));
    if sub.wants_append() {
        sub.push_column(v_full, op);
        sub.appended += 1;
        return UpdateOutcome::Appended;
    }
    let k = sub.v.len() - 1;
    match mgs_orthonormalize(&sub.v[..k], new_solution, sub.drop_tol) {
        Some(v) => {
            sub.replace_last(v, op);
            sub.replaced += 1;
            UpdateOutcome::Replaced
        }
        None => {
            sub.rejected += 1;
            UpdateOutcome::Rejected
        }
    }
}

/// Deviations of the cached state from a from-scratch recomputation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SubspaceAudit {
    pub n_cols: usize,
    /// `max |V^T V - I|`.
    pub orthonormality: f64,
    /// `max_i |W_i - K v_i|_2 / |K v_i|_2`.
    pub w_deviation: f64,
    /// `max |G - V^T K V| / max |V^T K V|`.
    pub g_deviation: f64,
    /// `max |G - G^T| / max |G|`.
    pub g_asymmetry: f64,
}

impl SubspaceAudit {
    pub fn max_deviation(&self) -> f64 {
        self.orthonormality
            .max(self.w_deviation)
            .max(self.g_deviation)
            .max(self.g_asymmetry)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_deviation() <= tol
    }
}

pub fn subspace_audit<A: LinearOperator + ?Sized>(sub: &SubspaceOperator, op: &A) -> SubspaceAudit {
    let m = sub.v.len();
    let mut audit = SubspaceAudit {
        n_cols: m,
        ..Default::default()
    };
    let mut fresh_w = Vec::with_capacity(m);
    for (v, w) in sub.v.iter().zip(&sub.w) {
        let mut kv = vec![0.0; sub.n];
        op.apply(v, &mut kv);
        let diff: Vec<f64> = kv.iter().zip(w).map(|(a, b)| a - b).collect();
        let scale = norm2(&kv);
        let dev = if scale > 0.0 {
            norm2(&diff) / scale
        } else {
            norm2(&diff)
        };
        audit.w_deviation = audit.w_deviation.max(dev);
        fresh_w.push(kv);
    }
    let mut g_scale = 0.0f64;
    let mut g_abs = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let e = dot(&sub.v[i], &sub.v[j]) - if i == j { 1.0 } else { 0.0 };
            audit.orthonormality = audit.orthonormality.max(e.abs());
            let g = dot(&sub.v[i], &fresh_w[j]);
            g_scale = g_scale.max(g.abs());
            g_abs = g_abs.max((sub.g.get(i, j) - g).abs());
            audit.g_asymmetry = audit.g_asymmetry.max((sub.g.get(i, j) - sub.g.get(j, i)).abs());
        }
    }
    if g_scale > 0.0 {
        audit.g_deviation = g_abs / g_scale;
        audit.g_asymmetry /= g_scale;
    }
    audit
}

/// Parameters shared by the per-family solve contexts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CspeConfig {
    pub n_cg_acc: usize,
    pub max_cols: usize,
    pub rule: AppendRule,
    /// Record `|V^T (r - K x0)| / |r|` for every issued start vector.
    pub galerkin_audit: bool,
}

impl Default for CspeConfig {
    fn default() -> Self {
        Self {
            n_cg_acc: 3,
            max_cols: 32,
            rule: AppendRule::Conjunctive,
            galerkin_audit: false,
        }
    }
}

/// Aggregate PCG statistics of one family.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub solves: usize,
    pub iterations: usize,
    pub max_iterations: usize,
    pub max_subspace_cols: usize,
}

impl SolveStats {
    pub fn average_iterations(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.iterations as f64 / self.solves as f64
        }
    }
}

/// Galerkin residuals of issued CSPE start vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GalerkinRecord {
    pub samples: usize,
    pub max_relative: f64,
}

/// Start-vector state of one right-hand-side family within one run.
#[derive(Debug, Clone)]
pub struct SolveContext {
    pub family: RhsFamily,
    pub strategy: StartStrategy,
    pub subspace: SubspaceOperator,
    pub stats: SolveStats,
    pub galerkin: GalerkinRecord,
    galerkin_audit: bool,
    previous: Option<Vec<f64>>,
}

impl SolveContext {
    pub fn new(family: RhsFamily, strategy: StartStrategy, n: usize, cfg: &CspeConfig) -> Result<Self> {
        Ok(Self {
            family,
            strategy,
            subspace: SubspaceOperator::new(n, cfg.n_cg_acc, cfg.max_cols)?.with_rule(cfg.rule),
            stats: SolveStats::default(),
            galerkin: GalerkinRecord::default(),
            galerkin_audit: cfg.galerkin_audit,
            previous: None,
        })
    }

    pub fn previous(&self) -> Option<&[f64]> {
        self.previous.as_deref()
    }

    /// Start vector for `K x = r` under the context's strategy.
    pub fn start_vector<A: LinearOperator + ?Sized>(&mut self, r: &[f64], op: &A) -> Result<Vec<f64>> {
        match self.strategy {
            StartStrategy::Zero => Ok(vec![0.0; r.len()]),
            StartStrategy::Previous => Ok(self.previous.clone().unwrap_or_else(|| vec![0.0; r.len()])),
            StartStrategy::Cspe => {
                let x0 = spe_start_vector(&self.subspace, r)?;
                if self.galerkin_audit && !self.subspace.is_empty() {
                    let rn = norm2(r);
                    if rn > 0.0 {
                        let mut kx = vec![0.0; r.len()];
                        op.apply(&x0, &mut kx);
                        let res: Vec<f64> = r.iter().zip(&kx).map(|(a, b)| a - b).collect();
                        let proj: Vec<f64> = self.subspace.v.iter().map(|v| dot(v, &res)).collect();
                        self.galerkin.samples += 1;
                        self.galerkin.max_relative = self.galerkin.max_relative.max(norm2(&proj) / rn);
                    }
                }
                Ok(x0)
            }
        }
    }

    /// Records a converged solve and updates the subspace.
    pub fn record<A: LinearOperator + ?Sized>(&mut self, solution: &[f64], report: &PcgReport, op: &A) {
        self.stats.solves += 1;
        self.stats.iterations += report.iterations;
        self.stats.max_iterations = self.stats.max_iterations.max(report.iterations);
        match self.strategy {
            StartStrategy::Zero => {}
            StartStrategy::Previous => self.previous = Some(solution.to_vec()),
            StartStrategy::Cspe => {
                cspe_update(&mut self.subspace, solution, report.iterations, op);
                self.stats.max_subspace_cols = self.stats.max_subspace_cols.max(self.subspace.n_cols());
            }
        }
    }
}
