//! Random partitioned systems and dense reference computations.
#![allow(dead_code)]

use std::sync::Arc;

use mqs_core::problem::{partition, ConstantAssembler, DiscreteSystem, PartitionedSystem, SourceWaveform};
use mqs_core::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `K = B^T B` with two duplicated air columns in `B`, so `K_nn` is singular
/// and every air right-hand side built from `K` is consistent.
pub struct RandomSystem {
    pub ps: PartitionedSystem,
    pub k: DMatrix<f64>,
    pub m_cc: DMatrix<f64>,
    pub n_c: usize,
    pub n_n: usize,
}

pub fn random_system(seed: u64, singular: bool) -> RandomSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_c = rng.random_range(1..=4);
    let n_n = rng.random_range(2..=12 - n_c);
    let n = n_c + n_n;
    let rows = n + 2;
    let mut b = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
    if singular {
        let src = b.column(n_c).into_owned();
        b.set_column(n - 1, &src);
    }
    let k = b.transpose() * &b;
    // nonnegative factor keeps the lumped row sums positive
    let c = DMatrix::from_fn(n_c, n_c, |_, _| rng.random_range(0.0..1.0));
    let m_cc = c.transpose() * &c + DMatrix::identity(n_c, n_c);

    let mut m_full = DMatrix::zeros(n, n);
    m_full.view_mut((0, 0), (n_c, n_c)).copy_from(&m_cc);
    let y = DVector::from_fn(n_n, |_, _| rng.random_range(-1.0..1.0));
    let k_nn = k.view((n_c, n_c), (n_n, n_n)).into_owned();
    let j_n = &k_nn * y;
    let mut src = vec![0.0; n_c];
    src.extend(j_n.iter());

    let sys = DiscreteSystem::new(
        to_csr(&m_full),
        Arc::new(ConstantAssembler::new(to_csr(&k))),
        src,
        SourceWaveform::new(1.0, 0.5).unwrap(),
        (0..n).map(|i| i < n_c).collect(),
    )
    .unwrap();
    RandomSystem {
        ps: partition(Arc::new(sys)).unwrap(),
        k,
        m_cc,
        n_c,
        n_n,
    }
}

impl RandomSystem {
    /// `K_cc - K_cn K_nn^+ K_nc` with an SVD pseudo-inverse.
    pub fn dense_schur(&self) -> DMatrix<f64> {
        let (c, n) = (self.n_c, self.n_n);
        let k_cc = self.k.view((0, 0), (c, c)).into_owned();
        let k_cn = self.k.view((0, c), (c, n)).into_owned();
        let k_nn = self.k.view((c, c), (n, n)).into_owned();
        let eps = 1e-10 * k_nn.norm();
        let pinv = k_nn.pseudo_inverse(eps).unwrap();
        k_cc - &k_cn * pinv * k_cn.transpose()
    }
}

pub fn to_csr(m: &DMatrix<f64>) -> CsrMatrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    CsrMatrix::from_dense(&rows)
}

pub fn to_dense(m: &CsrMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.n_rows(), m.n_cols(), |i, j| d[i][j])
}

pub fn random_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}
