use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Double-well potential `W(z) = (1 - z^2)^2 (1 + chi sin(pi z / 2))`.
///
/// `chi != 0` breaks the `z -> -z` symmetry while keeping the wells at `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWell {
    chi: f64,
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self { chi: 0.0 }
    }
}

impl DoubleWell {
    pub fn new(chi: f64) -> Result<Self> {
        ensure!(
            chi.is_finite() && chi.abs() < 1.0,
            "asymmetry chi must lie in (-1, 1), got {chi}"
        );
        Ok(Self { chi })
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn alpha_w(&self) -> f64 {
        1.0 - self.chi.abs()
    }

    pub fn beta_w(&self) -> f64 {
        9.0 * (1.0 + self.chi.abs())
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        let q = 1.0 - z * z;
        q * q * (1.0 + self.chi * (FRAC_PI_2 * z).sin())
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        let q = 1.0 - z * z;
        let (sn, cs) = (FRAC_PI_2 * z).sin_cos();
        -4.0 * z * q * (1.0 + self.chi * sn) + q * q * self.chi * FRAC_PI_2 * cs
    }

    /// `W(z + dz) - W(z)` without cancellation for small `dz`.
    pub fn change(&self, z: f64, dz: f64) -> f64 {
        let a = z + dz;
        let (qa, qb) = (1.0 - a * a, 1.0 - z * z);
        // qa - qb = -dz (a + z); sin difference via the product formula.
        let dq2 = -dz * (a + z) * (qa + qb);
        let sa = (FRAC_PI_2 * a).sin();
        let ds = 2.0
            * (0.25 * std::f64::consts::PI * (a + z)).cos()
            * (0.25 * std::f64::consts::PI * dz).sin();
        dq2 * (1.0 + self.chi * sa) + qb * qb * self.chi * ds
    }

    /// Upper bound on `W''` at the wells, `8 (1 + |chi|)`.
    pub fn well_curvature_bound(&self) -> f64 {
        8.0 * (1.0 + self.chi.abs())
    }
}

pub fn eval_double_well(w: &DoubleWell, z: f64) -> f64 {
    w.value(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        let w0 = DoubleWell::new(0.0).unwrap();
        assert_eq!(eval_double_well(&w0, 1.0), 0.0);
        assert_eq!(eval_double_well(&w0, 0.0), 1.0);
        let w = DoubleWell::new(0.5).unwrap();
        assert_eq!(eval_double_well(&w, -1.0), 0.0);
    }

    #[test]
    fn rejects_out_of_range_chi() {
        assert!(DoubleWell::new(1.0).is_err());
        assert!(DoubleWell::new(-1.5).is_err());
        assert!(DoubleWell::new(f64::NAN).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let w = DoubleWell::new(0.4).unwrap();
        for i in 0..41 {
            let z = -2.0 + 0.1 * i as f64;
            let h = 1e-6;
            let fd = (w.value(z + h) - w.value(z - h)) / (2.0 * h);
            assert!(
                (fd - w.derivative(z)).abs() < 1e-6 * (1.0 + fd.abs()),
                "z = {z}"
            );
        }
    }

    #[test]
    fn change_matches_difference() {
        let w = DoubleWell::new(-0.3).unwrap();
        for i in 0..30 {
            let z = -1.7 + 0.11 * i as f64;
            for dz in [0.3, -0.02, 1e-5] {
                let direct = w.value(z + dz) - w.value(z);
                assert!((w.change(z, dz) - direct).abs() < 1e-13, "z {z} dz {dz}");
            }
        }
    }

    #[test]
    fn quadratic_bounds_hold() {
        for &chi in &[-0.7, 0.0, 0.4, 0.9] {
            let w = DoubleWell::new(chi).unwrap();
            for i in 0..=400 {
                let z = -2.0 + 0.01 * i as f64;
                let d = (1.0 - z.abs()).powi(2);
                let v = w.value(z);
                assert!(v >= w.alpha_w() * d - 1e-12, "chi {chi} z {z}");
                assert!(v <= w.beta_w() * d + 1e-12, "chi {chi} z {z}");
            }
            for i in 0..200 {
                let z = 2.0 + 0.05 * i as f64;
                assert!(w.value(z) >= 9.0 * w.alpha_w() - 1e-12);
                assert!(w.value(-z) >= 9.0 * w.alpha_w() - 1e-12);
            }
        }
    }
}
