use super::vec::{axpy, dot, norm2, scale};

/// Drop tolerance below which a projected vector counts as linearly dependent.
pub const DEFAULT_DROP_TOL: f64 = 1e-12;

/// Orthonormalizes `v_new` against the orthonormal columns in `basis` with
/// modified Gram-Schmidt.
///
/// The projection sweep runs twice so that nearly dependent inputs still come
/// out orthogonal to working precision. Returns `None` when the remaining norm
/// is below `drop_tol * |v_new|` or `v_new` is zero.
pub fn mgs_orthonormalize(basis: &[Vec<f64>], v_new: &[f64], drop_tol: f64) -> Option<Vec<f64>> {
    let input_norm = norm2(v_new);
    if input_norm == 0.0 || !input_norm.is_finite() {
        return None;
    }
    let mut v = v_new.to_vec();
    for _ in 0..2 {
        for q in basis {
            debug_assert_eq!(q.len(), v.len());
            let c = dot(q, &v);
            axpy(-c, q, &mut v);
        }
    }
    let n = norm2(&v);
    if n < drop_tol * input_norm {
        return None;
    }
    scale(1.0 / n, &mut v);
    Some(v)
}
