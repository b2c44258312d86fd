use super::csr::{CsrMatrix, LinearOperator};
use super::vec::{axpy, dot, norm2};
use crate::error::{Error, Result};

/// Outcome of one PCG solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity,
    Jacobi { inverse_diagonal: Vec<f64> },
}

impl Preconditioner {
    pub fn jacobi(a: &CsrMatrix) -> Result<Self> {
        build_jacobi(a)
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi { inverse_diagonal } => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inverse_diagonal) {
                    *zi = ri * di;
                }
            }
        }
    }
}

/// Jacobi preconditioner from the matrix diagonal.
pub fn build_jacobi(a: &CsrMatrix) -> Result<Preconditioner> {
    let inverse_diagonal = a
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(row, d)| {
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d)
            } else {
                Err(Error::NonPositiveDiagonal { row, value: d })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Preconditioner::Jacobi { inverse_diagonal })
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite operators.
///
/// Stops when `|b - A x|_2 <= tol |b|_2`. When the recursively updated
/// residual first meets the criterion the true residual is recomputed and the
/// iteration restarts from it if the two disagree, so `converged` always
/// refers to the true residual. A zero right-hand side returns `x = 0`
/// without iterating. On hitting `max_iter` the last iterate is returned with
/// `converged = false`.
pub fn pcg<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
    pre: &Preconditioner,
) -> Result<(Vec<f64>, PcgReport)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "pcg right-hand side",
            expected: n,
            got: b.len(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "pcg start vector",
            expected: n,
            got: x0.len(),
        });
    }
    if let Preconditioner::Jacobi { inverse_diagonal } = pre {
        if inverse_diagonal.len() != n {
            return Err(Error::DimensionMismatch {
                what: "pcg preconditioner",
                expected: n,
                got: inverse_diagonal.len(),
            });
        }
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("pcg tolerance must be > 0, got {tol}")));
    }

    let b_norm = norm2(b);
    if !b_norm.is_finite() {
        return Err(Error::NonFinite("pcg right-hand side"));
    }
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            PcgReport {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
            },
        ));
    }

    let mut x = x0.to_vec();
    let mut q = vec![0.0; n];
    let mut r = vec![0.0; n];
    true_residual(a, b, &x, &mut q, &mut r);
    let mut rel = norm2(&r) / b_norm;
    if !rel.is_finite() {
        return Err(Error::NonFinite("pcg initial residual"));
    }
    if rel <= tol {
        return Ok((
            x,
            PcgReport {
                iterations: 0,
                final_relative_residual: rel,
                converged: true,
            },
        ));
    }

    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() || !rz.is_finite() {
            return Err(Error::NonFinite("pcg iteration"));
        }
        if pq <= 0.0 || rz <= 0.0 {
            // breakdown: direction in the null space or an inconsistent rhs
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        iterations += 1;
        rel = norm2(&r) / b_norm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("pcg residual"));
        }

        if rel <= tol {
            true_residual(a, b, &x, &mut q, &mut r);
            rel = norm2(&r) / b_norm;
            if rel <= tol {
                converged = true;
                break;
            }
            // residual replacement: restart the recurrence from the true residual
            pre.apply(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }

        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    Ok((
        x,
        PcgReport {
            iterations,
            final_relative_residual: rel,
            converged,
        },
    ))
}

fn true_residual<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64], ax: &mut [f64], r: &mut [f64]) {
    a.apply(x, ax);
    for ((ri, bi), axi) in r.iter_mut().zip(b).zip(ax.iter()) {
        *ri = bi - axi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_system() {
        let a = CsrMatrix::identity(2);
        let (x, rep) = pcg(&a, &[5.0, -3.0], &[0.0, 0.0], 1e-12, 10, &Preconditioner::Identity).unwrap();
        assert_eq!(x, vec![5.0, -3.0]);
        assert!(rep.iterations <= 1 && rep.converged);
    }

    #[test]
    fn two_by_two_spd() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let pre = build_jacobi(&a).unwrap();
        let (x, rep) = pcg(&a, &[1.0, 2.0], &[0.0, 0.0], 1e-14, 10, &pre).unwrap();
        assert!(rep.converged);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn consistent_singular_system() {
        let a = CsrMatrix::from_diagonal(&[1.0, 1.0, 0.0]);
        let (x, rep) = pcg(&a, &[2.0, 3.0, 0.0], &[0.0; 3], 1e-12, 10, &Preconditioner::Identity).unwrap();
        assert!(rep.converged);
        assert_eq!(x, vec![2.0, 3.0, 0.0]);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = CsrMatrix::identity(3);
        let (x, rep) = pcg(&a, &[0.0; 3], &[1.0, 2.0, 3.0], 1e-8, 10, &Preconditioner::Identity).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn exact_start_takes_no_iterations() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x0 = vec![1.0, 1.0];
        let b = a.spmv(&x0).unwrap();
        let (x, rep) = pcg(&a, &b, &x0, 1e-10, 10, &Preconditioner::Identity).unwrap();
        assert_eq!(x, x0);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let (_, rep) = pcg(&a, &vec![1.0; n], &vec![0.0; n], 1e-12, 3, &Preconditioner::Identity).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let a = CsrMatrix::identity(2);
        assert!(matches!(
            pcg(&a, &[f64::NAN, 1.0], &[0.0, 0.0], 1e-8, 10, &Preconditioner::Identity),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn jacobi_diagonals() {
        let inv = |a: &CsrMatrix| match build_jacobi(a).unwrap() {
            Preconditioner::Jacobi { inverse_diagonal } => inverse_diagonal,
            Preconditioner::Identity => unreachable!(),
        };
        assert_eq!(inv(&CsrMatrix::from_diagonal(&[2.0, 4.0])), vec![0.5, 0.25]);
        assert_eq!(inv(&CsrMatrix::identity(3)), vec![1.0; 3]);
        let lap = CsrMatrix::from_dense(&[vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]]);
        assert_eq!(inv(&lap), vec![0.5; 3]);
    }

    #[test]
    fn jacobi_rejects_nonpositive_diagonal() {
        let a = CsrMatrix::from_diagonal(&[1.0, 0.0, 3.0]);
        match build_jacobi(&a) {
            Err(Error::NonPositiveDiagonal { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_jacobi(&CsrMatrix::from_diagonal(&[-1.0])).is_err());
    }

    fn spd_from_seed(entries: &[f64], n: usize) -> Vec<Vec<f64>> {
        // A = B^T B + n I
        let b: Vec<Vec<f64>> = (0..n).map(|i| entries[i * n..(i + 1) * n].to_vec()).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s: f64 = (0..n).map(|k| b[k][i] * b[k][j]).sum();
                        s + if i == j { n as f64 } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    fn dense_gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matches_dense_solve_within_n_iterations(
            entries in proptest::collection::vec(-1.0f64..1.0, 900),
            b in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let n = 30;
            let dense = spd_from_seed(&entries, n);
            let a = CsrMatrix::from_dense(&dense);
            let pre = build_jacobi(&a).unwrap();
            let (x, rep) = pcg(&a, &b, &vec![0.0; n], 1e-12, 10 * n, &pre).unwrap();
            prop_assert!(rep.converged);
            prop_assert!(rep.iterations <= n);
            let exact = dense_gauss(dense.clone(), b.clone());
            let err = x.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-8 * scale);
        }

        #[test]
        fn energy_error_decreases_monotonically(
            entries in proptest::collection::vec(-1.0f64..1.0, 400),
            b in proptest::collection::vec(-1.0f64..1.0, 20),
        ) {
            // CG minimizes the A-norm error over growing Krylov spaces, so
            // truncating at k iterations gives a non-increasing error in k.
            let n = 20;
            let dense = spd_from_seed(&entries, n);
            let a = CsrMatrix::from_dense(&dense);
            let exact = dense_gauss(dense.clone(), b.clone());
            let energy = |x: &[f64]| {
                let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
                dot(&e, &a.spmv(&e).unwrap())
            };
            let mut last = f64::INFINITY;
            for k in 0..n {
                let (x, _) = pcg(&a, &b, &vec![0.0; n], 1e-300, k, &Preconditioner::Identity).unwrap();
                let en = energy(&x);
                prop_assert!(en <= last * (1.0 + 1e-9) + 1e-24);
                last = en;
            }
        }
    }
}
