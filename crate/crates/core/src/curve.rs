//! Fixed-point form of the fitted curve `a^int + b`.
//!
//! The base is rounded to a dyadic `a_raw / 2^12`. Its powers are then exact
//! integers at a common fraction, so `a^i * a^j == a^(i+j)` holds bit for bit
//! and the index-domain dot product reproduces the centroid products exactly.
//!
//! | quantity       | raw                         | fractional bits |
//! |----------------|-----------------------------|-----------------|
//! | `a`            | `a_raw`                     | 12              |
//! | `b`            | `b_raw`                     | 13              |
//! | `a^k`, k <= 7  | `a_raw^k << 12(7-k)`        | 84              |
//! | `a^k`, k <= 14 | `a_raw^k << 12(14-k)`       | 168 (256-bit)   |

use ethnum::I256;
use serde::{Deserialize, Serialize};

use crate::error::{MokeyError, Result};
use crate::golden::ExpFit;

pub const A_FRAC: u32 = 12;
pub const B_FRAC: u32 = 13;
/// Fraction of Gaussian curve values (indexes 0..=7).
pub const CURVE_FRAC: u32 = 7 * A_FRAC;
/// Fraction of the product table (indexes 0..=14).
pub const POW_FRAC: u32 = 2 * CURVE_FRAC;
/// Number of Gaussian indexes per sign.
pub const GAUSS_LEVELS: usize = 8;
/// Distinct index sums `int_A + int_W`.
pub const SUM_LEVELS: usize = 2 * GAUSS_LEVELS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CurveConsts {
    pub a_raw: u32,
    pub b_raw: i32,
}

impl CurveConsts {
    pub fn from_fit(fit: &ExpFit) -> Result<Self> {
        let a_raw = (fit.a * (1u32 << A_FRAC) as f64).round();
        let b_raw = (fit.b * (1u32 << B_FRAC) as f64).round();
        if !(a_raw > (1u32 << A_FRAC) as f64 && a_raw <= (2u32 << A_FRAC) as f64) {
            return Err(MokeyError::InvalidArgument(format!(
                "curve base {} must lie in (1, 2] after rounding to {A_FRAC} fractional bits",
                fit.a
            )));
        }
        if !(b_raw.abs() < (1u64 << 30) as f64) {
            return Err(MokeyError::InvalidArgument(format!("curve offset {} out of range", fit.b)));
        }
        Ok(Self { a_raw: a_raw as u32, b_raw: b_raw as i32 })
    }

    pub fn a(&self) -> f64 {
        self.a_raw as f64 / (1u32 << A_FRAC) as f64
    }

    pub fn b(&self) -> f64 {
        self.b_raw as f64 / (1u32 << B_FRAC) as f64
    }

    /// `a^k` at [`CURVE_FRAC`] for `k <= 7`.
    pub fn pow_curve(&self, k: usize) -> i128 {
        debug_assert!(k < GAUSS_LEVELS);
        (self.a_raw as i128).pow(k as u32) << (A_FRAC as usize * (GAUSS_LEVELS - 1 - k))
    }

    /// `a^k` at [`POW_FRAC`] for `k <= 14`.
    pub fn pow_table(&self, k: usize) -> I256 {
        debug_assert!(k < SUM_LEVELS);
        I256::from(self.a_raw).pow(k as u32) << (A_FRAC * (SUM_LEVELS - 1 - k) as u32)
    }

    /// `b` at [`CURVE_FRAC`].
    pub fn b_curve(&self) -> i128 {
        (self.b_raw as i128) << (CURVE_FRAC - B_FRAC)
    }

    /// `a^k + b` at [`CURVE_FRAC`].
    pub fn value_curve(&self, k: usize) -> i128 {
        self.pow_curve(k) + self.b_curve()
    }

    /// `a^int + b` in floating point with the rounded constants; valid for
    /// any index, including outlier bins.
    pub fn value_f64(&self, int: u32) -> f64 {
        self.a().powi(int as i32) + self.b()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal_fit() -> ExpFit {
        ExpFit { a: 1.179, b: -0.977, max_int: 7 }
    }

    #[test]
    fn powers_are_exact() {
        let c = CurveConsts::from_fit(&nominal_fit()).unwrap();
        for i in 0..GAUSS_LEVELS {
            for j in 0..GAUSS_LEVELS {
                assert_eq!(I256::from(c.pow_curve(i)) * I256::from(c.pow_curve(j)), c.pow_table(i + j));
            }
        }
        assert_eq!(c.pow_curve(0), 1i128 << CURVE_FRAC);
    }

    #[test]
    fn rounded_constants_track_the_fit() {
        let c = CurveConsts::from_fit(&nominal_fit()).unwrap();
        assert_eq!(c.a_raw, 4829);
        assert!((c.a() - 1.179).abs() < 1.0 / 8192.0);
        assert!((c.b() + 0.977).abs() < 1.0 / 16384.0);
        let v3 = c.value_curve(3) as f64 / 2f64.powi(CURVE_FRAC as i32);
        assert!((v3 - 0.662).abs() < 1e-3, "{v3}");
    }

    #[test]
    fn rejects_flat_base() {
        assert!(CurveConsts::from_fit(&ExpFit { a: 1.0001, b: 0.0, max_int: 7 }).is_err());
    }
}
