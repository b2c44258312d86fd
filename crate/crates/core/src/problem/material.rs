use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reluctivity of free space, 1/(4 pi 1e-7) m/H.
pub const NU_VACUUM: f64 = 1.0 / (4.0 * PI * 1e-7);

/// Reluctivity law nu(B^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    Linear {
        nu: f64,
    },
    /// `nu = k1 exp(k2 B^2) + k3`, clamped at [`NU_VACUUM`].
    Brauer {
        k1: f64,
        k2: f64,
        k3: f64,
    },
}

impl MaterialModel {
    pub fn vacuum() -> Self {
        MaterialModel::Linear { nu: NU_VACUUM }
    }

    pub fn linear(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "linear reluctivity must be > 0, got {nu}"
            )));
        }
        Ok(MaterialModel::Linear { nu })
    }

    /// Linear material of relative permeability `mu_r`.
    pub fn linear_relative(mu_r: f64) -> Result<Self> {
        Self::linear(NU_VACUUM / mu_r)
    }

    pub fn brauer(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > 0.0 && k3 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Brauer coefficients must be positive, got k1={k1}, k2={k2}, k3={k3}"
            )));
        }
        Ok(MaterialModel::Brauer { k1, k2, k3 })
    }

    /// Default steel curve used by the built-in models.
    pub fn brauer_default() -> Self {
        MaterialModel::Brauer {
            k1: 0.3774,
            k2: 2.970,
            k3: 388.33,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, MaterialModel::Linear { .. })
    }

    pub fn nu(&self, b_squared: f64) -> f64 {
        nu(self, b_squared)
    }

    pub fn nu_derivative(&self, b_squared: f64) -> f64 {
        nu_derivative(self, b_squared)
    }
}

/// Reluctivity at flux density magnitude squared `b_squared` (T^2).
pub fn nu(material: &MaterialModel, b_squared: f64) -> f64 {
    match *material {
        MaterialModel::Linear { nu } => nu,
        MaterialModel::Brauer { k1, k2, k3 } => (k1 * (k2 * b_squared).exp() + k3).min(NU_VACUUM),
    }
}

/// d nu / d(B^2); zero for linear materials and inside the clamp.
pub fn nu_derivative(material: &MaterialModel, b_squared: f64) -> f64 {
    match *material {
        MaterialModel::Linear { .. } => 0.0,
        MaterialModel::Brauer { k1, k2, k3 } => {
            let e = k1 * (k2 * b_squared).exp();
            if e + k3 >= NU_VACUUM {
                0.0
            } else {
                k2 * e
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brauer_values() {
        let m = MaterialModel::brauer_default();
        assert_eq!(m.nu(0.0), 0.3774 + 388.33);
        assert_eq!(m.nu(1e6), NU_VACUUM);
        let expect = 0.3774 * 2.970f64.exp() + 388.33;
        assert!((m.nu(1.0) - expect).abs() < 1e-12);
        assert!((m.nu(1.0) - 395.68).abs() < 0.01);
    }

    #[test]
    fn derivatives() {
        let lin = MaterialModel::linear(1000.0).unwrap();
        assert_eq!(lin.nu_derivative(3.0), 0.0);
        let m = MaterialModel::brauer_default();
        approx::assert_relative_eq!(
            m.nu_derivative(2.0),
            0.3774 * 2.970 * (2.970f64 * 2.0).exp(),
            max_relative = 1e-14
        );
        assert_eq!(m.nu_derivative(100.0), 0.0);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let m = MaterialModel::brauer_default();
        // stay away from the clamp point near B^2 ~ 4.9
        for &b2 in &[0.0, 0.3, 1.0, 2.0, 3.0, 4.0, 4.5] {
            let h = 1e-4 * (1.0 + b2);
            let fd = if b2 == 0.0 {
                // second-order one-sided difference at the origin
                (-3.0 * m.nu(0.0) + 4.0 * m.nu(h) - m.nu(2.0 * h)) / (2.0 * h)
            } else {
                (m.nu(b2 + h) - m.nu(b2 - h)) / (2.0 * h)
            };
            let an = m.nu_derivative(b2);
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "B^2={b2}: fd {fd} vs {an}");
        }
        let lin = MaterialModel::linear(5.0).unwrap();
        assert_eq!((lin.nu(1.0 + 1e-6) - lin.nu(1.0 - 1e-6)) / 2e-6, lin.nu_derivative(1.0));
    }

    #[test]
    fn monotone_and_positive() {
        let m = MaterialModel::brauer_default();
        let mut last = 0.0;
        for k in 0..200 {
            let v = m.nu(k as f64 * 0.05);
            assert!(v > 0.0 && v >= last);
            last = v;
        }
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(MaterialModel::brauer(0.0, 1.0, 1.0).is_err());
        assert!(MaterialModel::linear(-1.0).is_err());
    }
}
