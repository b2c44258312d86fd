use std::borrow::Cow;
use std::sync::Arc;

use super::{DiscreteSystem, SourceWaveform, StiffnessAssembler};
use crate::error::{Error, Result};
use crate::sparse::{build_jacobi, CsrMatrix, Preconditioner};

/// How `M_cc^{-1}` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassMode {
    /// PCG on the consistent `M_cc`.
    #[default]
    Consistent,
    /// Row-sum lumped diagonal.
    Lumped,
}

/// Conductor/air block form of the system:
///
/// ```text
/// [M_cc 0] d/dt [a_c]   [K_cc(a_c) K_cn] [a_c]   [   0  ]
/// [ 0   0]      [a_n] + [K_nc      K_nn] [a_n] = [j_s,n ]
/// ```
#[derive(Debug, Clone)]
pub struct PartitionedSystem {
    pub m_cc: CsrMatrix,
    pub m_cc_lumped: Vec<f64>,
    pub k_cn: CsrMatrix,
    /// `K_cn^T`, stored explicitly.
    pub k_nc: CsrMatrix,
    pub k_nn: CsrMatrix,
    pub k_cc_linear: CsrMatrix,
    pub idx_c: Vec<usize>,
    pub idx_n: Vec<usize>,
    pub j_sn_pattern: Vec<f64>,
    pub waveform: SourceWaveform,
    pub k_nn_pre: Preconditioner,
    pub m_cc_pre: Preconditioner,
    pub system: Arc<DiscreteSystem>,
    linear: bool,
}

/// Splits the dofs into conductive (`c`) and non-conductive (`n`) sets.
pub fn partition(sys: Arc<DiscreteSystem>) -> Result<PartitionedSystem> {
    sys.validate()?;
    let n = sys.n_dofs();
    let idx_c: Vec<usize> = (0..n).filter(|&i| sys.conductive[i]).collect();
    let idx_n: Vec<usize> = (0..n).filter(|&i| !sys.conductive[i]).collect();
    if idx_c.is_empty() {
        return Err(Error::EmptyPartition("conductive"));
    }
    if idx_n.is_empty() {
        return Err(Error::EmptyPartition("non-conductive"));
    }
    if let Some(&d) = sys.assembler.nonlinear_dofs().iter().find(|&&d| !sys.conductive[d]) {
        return Err(Error::InvalidParameter(format!(
            "nonlinear material reaches non-conductive dof {d}; K_cn and K_nn must be state-independent"
        )));
    }

    let k = &sys.k_linear;
    let m_cc = sys.mass.submatrix(&idx_c, &idx_c);
    let m_cc_lumped: Vec<f64> = (0..m_cc.n_rows()).map(|i| m_cc.row(i).1.iter().sum()).collect();
    let k_cn = k.submatrix(&idx_c, &idx_n);
    let k_nc = k_cn.transpose();
    let k_nn = k.submatrix(&idx_n, &idx_n);
    let k_cc_linear = k.submatrix(&idx_c, &idx_c);
    let j_sn_pattern: Vec<f64> = idx_n.iter().map(|&i| sys.source_pattern[i]).collect();

    let k_nn_pre = build_jacobi(&k_nn).unwrap_or(Preconditioner::Identity);
    let m_cc_pre = build_jacobi(&m_cc)?;
    if let Some((row, &value)) = m_cc_lumped.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveDiagonal { row, value });
    }

    Ok(PartitionedSystem {
        m_cc,
        m_cc_lumped,
        k_cn,
        k_nc,
        k_nn,
        k_cc_linear,
        idx_c,
        idx_n,
        j_sn_pattern,
        waveform: sys.waveform,
        k_nn_pre,
        m_cc_pre,
        linear: sys.assembler.is_linear(),
        system: sys,
    })
}

impl PartitionedSystem {
    pub fn n_c(&self) -> usize {
        self.idx_c.len()
    }

    pub fn n_n(&self) -> usize {
        self.idx_n.len()
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn assembler(&self) -> &dyn StiffnessAssembler {
        self.system.assembler.as_ref()
    }

    /// `K_cc(a_c)`; borrowed for linear materials.
    pub fn k_cc(&self, a_c: &[f64]) -> Cow<'_, CsrMatrix> {
        if self.linear {
            Cow::Borrowed(&self.k_cc_linear)
        } else {
            let global = self.scatter(a_c, &vec![0.0; self.n_n()]);
            let k = self.system.assembler.stiffness(&global);
            Cow::Owned(k.submatrix(&self.idx_c, &self.idx_c))
        }
    }

    /// `j_s,n(t)`.
    pub fn j_sn(&self, t: f64) -> Vec<f64> {
        let s = self.waveform.at(t);
        self.j_sn_pattern.iter().map(|p| s * p).collect()
    }

    pub fn gather(&self, global: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.idx_c.iter().map(|&i| global[i]).collect(),
            self.idx_n.iter().map(|&i| global[i]).collect(),
        )
    }

    pub fn scatter(&self, a_c: &[f64], a_n: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.idx_c.len() + self.idx_n.len()];
        for (&i, &v) in self.idx_c.iter().zip(a_c) {
            out[i] = v;
        }
        for (&i, &v) in self.idx_n.iter().zip(a_n) {
            out[i] = v;
        }
        out
    }

    /// Reassembles the global `(M, K)` from the blocks.
    pub fn scatter_blocks(&self) -> Result<(CsrMatrix, CsrMatrix)> {
        let n = self.n_c() + self.n_n();
        let mut m = Vec::with_capacity(self.m_cc.nnz());
        push_block(&mut m, &self.m_cc, &self.idx_c, &self.idx_c);
        let mut k = Vec::with_capacity(self.k_cc_linear.nnz() + 2 * self.k_cn.nnz() + self.k_nn.nnz());
        push_block(&mut k, &self.k_cc_linear, &self.idx_c, &self.idx_c);
        push_block(&mut k, &self.k_cn, &self.idx_c, &self.idx_n);
        push_block(&mut k, &self.k_nc, &self.idx_n, &self.idx_c);
        push_block(&mut k, &self.k_nn, &self.idx_n, &self.idx_n);
        Ok((CsrMatrix::from_triplets(n, n, &m)?, CsrMatrix::from_triplets(n, n, &k)?))
    }
}

fn push_block(out: &mut Vec<(usize, usize, f64)>, b: &CsrMatrix, rows: &[usize], cols: &[usize]) {
    for (bi, &gi) in rows.iter().enumerate() {
        let (c, v) = b.row(bi);
        out.extend(c.iter().zip(v).map(|(&bj, &val)| (gi, cols[bj], val)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_slab_model, ConstantAssembler, MaterialModel};

    #[test]
    fn two_by_two_hand_case() {
        let (m, a, b, c) = (2.0, 5.0, -1.0, 3.0);
        let sys = DiscreteSystem::new(
            CsrMatrix::from_dense(&[vec![m, 0.0], vec![0.0, 0.0]]),
            Arc::new(ConstantAssembler::new(CsrMatrix::from_dense(&[vec![a, b], vec![b, c]]))),
            vec![0.0, 1.0],
            SourceWaveform::new(1.0, 1.0).unwrap(),
            vec![true, false],
        )
        .unwrap();
        let ps = partition(Arc::new(sys)).unwrap();
        assert_eq!(ps.m_cc.to_dense(), vec![vec![m]]);
        assert_eq!(ps.k_cc_linear.to_dense(), vec![vec![a]]);
        assert_eq!(ps.k_cn.to_dense(), vec![vec![b]]);
        assert_eq!(ps.k_nn.to_dense(), vec![vec![c]]);
        assert_eq!(ps.j_sn_pattern, vec![1.0]);
    }

    #[test]
    fn slab_round_trip() {
        let sys = build_slab_model(
            64,
            0.1,
            0.5,
            5.96e7,
            MaterialModel::brauer_default(),
            SourceWaveform::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        let ps = partition(Arc::new(sys.clone())).unwrap();
        let (m, k) = ps.scatter_blocks().unwrap();
        assert_eq!(m, sys.mass);
        assert_eq!(k, sys.k_linear);
        let g: Vec<f64> = (0..sys.n_dofs()).map(|i| i as f64).collect();
        let (c, n) = ps.gather(&g);
        assert_eq!(ps.scatter(&c, &n), g);
        // global rhs has the (0, j_s,n) structure
        let j = sys.source(0.3);
        let (jc, jn) = ps.gather(&j);
        assert!(jc.iter().all(|&v| v == 0.0));
        assert_eq!(jn, ps.j_sn(0.3));
    }

    #[test]
    fn nonlinear_k_cc_depends_on_state() {
        let sys = build_slab_model(
            32,
            0.1,
            0.5,
            5.96e7,
            MaterialModel::brauer_default(),
            SourceWaveform::zero(),
        )
        .unwrap();
        let ps = partition(Arc::new(sys)).unwrap();
        let zero = ps.k_cc(&vec![0.0; ps.n_c()]).into_owned();
        assert_eq!(zero, ps.k_cc_linear);
        let a: Vec<f64> = (0..ps.n_c()).map(|i| 0.01 * i as f64).collect();
        assert_ne!(ps.k_cc(&a).into_owned(), zero);
    }
}
