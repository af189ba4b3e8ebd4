//! Q-format fixed-point: format selection, conversion and saturating arithmetic.
//!
//! Raw values are carried as `i64` regardless of the format width; a format
//! with `total_bits = b` admits raw values in `[-2^(b-1), 2^(b-1) - 1]`.
//! Rounding is half-away-from-zero everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{MokeyError, Result};

/// Widest format this module operates on; raw products must fit in `i128`.
pub const MAX_TOTAL_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    pub total_bits: u32,
    pub frac: u32,
}

/// Result of a saturating operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxResult {
    pub raw: i64,
    pub saturated: bool,
}

impl QFormat {
    pub fn new(total_bits: u32, frac: u32) -> Result<Self> {
        if !(2..=MAX_TOTAL_BITS).contains(&total_bits) {
            return Err(MokeyError::InvalidArgument(format!("total bits {total_bits} outside 2..={MAX_TOTAL_BITS}")));
        }
        if frac >= total_bits {
            return Err(MokeyError::InvalidArgument(format!("frac {frac} must be below total bits {total_bits}")));
        }
        Ok(Self { total_bits, frac })
    }

    /// 16-bit format with the given fractional bits.
    pub fn q16(frac: u32) -> Result<Self> {
        Self::new(16, frac)
    }

    /// Format whose representable range contains both `min` and `max`.
    ///
    /// Starts from [`compute_frac`] and gives up fractional bits until both
    /// endpoints convert without saturating. The width-only formula can fall
    /// one bit short for ranges that are not centred on zero.
    pub fn covering(total_bits: u32, max: f64, min: f64) -> Result<Self> {
        let (max, min) = if max > min {
            (max, min)
        } else if max == min {
            // A single point: widen by one unit so the formula stays defined.
            (max.abs().max(min.abs()) + 1.0, -(max.abs().max(min.abs()) + 1.0))
        } else {
            return Err(MokeyError::InvalidArgument(format!("max {max} below min {min}")));
        };
        let mut frac = compute_frac(total_bits, max, min)?;
        loop {
            let fmt = Self::new(total_bits, frac)?;
            let ok = !to_fixed_checked(max, fmt).saturated && !to_fixed_checked(min, fmt).saturated;
            if ok || frac == 0 {
                return Ok(fmt);
            }
            frac -= 1;
        }
    }

    pub fn max_raw(self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn min_raw(self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Value of one unit in the last place.
    pub fn ulp(self) -> f64 {
        (-(self.frac as f64)).exp2()
    }

    pub fn max_value(self) -> f64 {
        to_float(self.max_raw(), self)
    }

    pub fn min_value(self) -> f64 {
        to_float(self.min_raw(), self)
    }

    /// Clamp a wide raw value into range, reporting whether it was clamped.
    pub fn saturate(self, raw: i128) -> FxResult {
        let (lo, hi) = (self.min_raw() as i128, self.max_raw() as i128);
        if raw > hi {
            FxResult { raw: hi as i64, saturated: true }
        } else if raw < lo {
            FxResult { raw: lo as i64, saturated: true }
        } else {
            FxResult { raw: raw as i64, saturated: false }
        }
    }
}

/// Exact `ceil(log2(x))` for finite `x > 0`.
pub fn ceil_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut c = x.log2().ceil() as i32;
    // log2 may be off by an ulp near powers of two; settle with exact powers.
    while 2f64.powi(c - 1) >= x {
        c -= 1;
    }
    while 2f64.powi(c) < x {
        c += 1;
    }
    c
}

/// Fractional bits for a `b`-bit format spanning `[min, max]`:
/// `b - ceil(log2(max - min))`, clamped to `[0, b - 1]`.
pub fn compute_frac(b: u32, max: f64, min: f64) -> Result<u32> {
    if !(max > min) || !max.is_finite() || !min.is_finite() {
        return Err(MokeyError::InvalidArgument(format!(
            "compute_frac needs finite max > min (got max={max}, min={min})"
        )));
    }
    if b < 1 {
        return Err(MokeyError::InvalidArgument("b must be positive".into()));
    }
    let frac = b as i64 - ceil_log2(max - min) as i64;
    Ok(frac.clamp(0, b as i64 - 1) as u32)
}

pub fn to_fixed_checked(fl: f64, fmt: QFormat) -> FxResult {
    if fl.is_nan() {
        return FxResult { raw: 0, saturated: true };
    }
    let scaled = (fl * (fmt.frac as f64).exp2()).round();
    if scaled >= fmt.max_raw() as f64 {
        FxResult { raw: fmt.max_raw(), saturated: scaled > fmt.max_raw() as f64 }
    } else if scaled <= fmt.min_raw() as f64 {
        FxResult { raw: fmt.min_raw(), saturated: scaled < fmt.min_raw() as f64 }
    } else {
        FxResult { raw: scaled as i64, saturated: false }
    }
}

/// `round(fl * 2^frac)`, saturating to the format's range.
pub fn to_fixed(fl: f64, fmt: QFormat) -> i64 {
    to_fixed_checked(fl, fmt).raw
}

pub fn to_float(raw: i64, fmt: QFormat) -> f64 {
    raw as f64 * (-(fmt.frac as f64)).exp2()
}

/// Arithmetic shift by `shift` bits: left when positive is requested through a
/// negative `shift`, right with round-half-away-from-zero otherwise.
pub fn round_shift_i128(v: i128, shift: i32) -> i128 {
    if shift <= 0 {
        return v << (-shift) as u32;
    }
    let shift = shift as u32;
    let mag = v.unsigned_abs();
    let half = 1u128 << (shift - 1);
    let q = ((mag + half) >> shift) as i128;
    if v < 0 {
        -q
    } else {
        q
    }
}

pub fn fx_add(x: i64, y: i64, fmt: QFormat) -> FxResult {
    fmt.saturate(x as i128 + y as i128)
}

/// Exact product, one rounding into `fmt_out`, then saturation.
pub fn fx_mul(x: i64, y: i64, fmt_x: QFormat, fmt_y: QFormat, fmt_out: QFormat) -> FxResult {
    let product = x as i128 * y as i128;
    let shift = (fmt_x.frac + fmt_y.frac) as i32 - fmt_out.frac as i32;
    fmt_out.saturate(round_shift_i128(product, shift))
}
