use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vec::{dot, norm2, scale};
use crate::error::{Error, Result};

/// Default seed for the deterministic power-iteration start vector.
pub const DEFAULT_SEED: u64 = 0x05ee_dcf1;

#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Last normalized iterate; usable as a warm start.
    pub vector: Vec<f64>,
}

/// Dominant eigenvalue of a symmetric operator by power iteration with the
/// Rayleigh quotient `x^T A x / x^T x`.
///
/// Converged when two successive quotients differ by at most `tol` relative.
pub fn power_iteration<F>(mut apply: F, n: usize, tol: f64, max_iter: usize) -> Result<EigenEstimate>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    power_iteration_general(n, None, DEFAULT_SEED, tol, max_iter, |x, y| {
        apply(x, y)?;
        Ok(dot(x, y) / dot(x, x))
    })
}

/// Power iteration driver with a caller-supplied step.
///
/// `step(x, y)` must write the next (unnormalized) iterate into `y` and return
/// the Rayleigh-quotient estimate belonging to `x`. This covers generalized
/// pencils, where the quotient is `x^T S x / x^T M x` and `y = M^{-1} S x`.
/// Without `start`, the start vector is drawn uniformly from `[-1, 1]^n` with
/// a ChaCha8 generator seeded by `seed`.
pub fn power_iteration_general<F>(
    n: usize,
    start: Option<&[f64]>,
    seed: u64,
    tol: f64,
    max_iter: usize,
    mut step: F,
) -> Result<EigenEstimate>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::InvalidParameter("power iteration needs n >= 1".into()));
    }
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() == n && norm2(s) > 0.0 => s.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    };
    let nx = norm2(&x);
    scale(1.0 / nx, &mut x);

    let mut y = vec![0.0; n];
    let mut last = f64::NAN;
    let mut value = 0.0;
    for it in 1..=max_iter {
        value = step(&x, &mut y)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("power iteration"));
        }
        let ny = norm2(&y);
        if ny == 0.0 {
            // x lies in the null space; for the zero operator the answer is exact
            return Ok(EigenEstimate {
                value,
                iterations: it,
                converged: value == 0.0,
                vector: x,
            });
        }
        if it >= 3 && (value - last).abs() <= tol * value.abs() {
            return Ok(EigenEstimate {
                value,
                iterations: it,
                converged: true,
                vector: x,
            });
        }
        last = value;
        std::mem::swap(&mut x, &mut y);
        scale(1.0 / ny, &mut x);
    }
    Ok(EigenEstimate {
        value,
        iterations: max_iter,
        converged: false,
        vector: x,
    })
}
