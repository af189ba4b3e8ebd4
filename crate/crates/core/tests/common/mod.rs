//! Shared generators and the arbitrary-precision centroid oracle.
#![allow(dead_code)]

use std::sync::Arc;

use mokey_core::fixed::QFormat;
use mokey_core::golden::ExpFit;
use mokey_core::quant::{Code, TensorDictionary};
use num_bigint::BigInt;
use rand::seq::index::sample;
use rand::Rng;

pub const NOMINAL_FIT: ExpFit = ExpFit { a: 1.179, b: -0.977, max_int: 7 };

/// Fractional bits added to a dictionary's format by the oracle's centroids.
const EXTRA: u32 = 84;

/// Centroid of `code` as an integer at `qformat.frac + 84` fractional bits,
/// evaluated from the stored parameters alone:
/// `theta * s * (a^k + b) + m` with `a = a_raw / 2^12` and `b = b_raw / 2^13`,
/// or the stored outlier centroid.
pub fn centroid(d: &TensorDictionary, code: Code) -> BigInt {
    if code.is_outlier() {
        let table = if code.is_negative() { &d.ot_neg } else { &d.ot_pos };
        return BigInt::from(table[code.index() as usize].raw) << EXTRA;
    }
    let k = code.index() as u32;
    let a_k = BigInt::from(d.curve.a_raw).pow(k) << (12 * (7 - k)) as usize;
    let b = BigInt::from(d.curve.b_raw) << (EXTRA - 13) as usize;
    let theta = if code.is_negative() { -1 } else { 1 };
    BigInt::from(theta) * BigInt::from(d.s_raw) * (a_k + b) + (BigInt::from(d.m_raw) << EXTRA as usize)
}

/// Round half away from zero by `shift` bits, then saturate into `fmt`.
pub fn round_into(v: &BigInt, shift: u32, fmt: QFormat) -> (i64, bool) {
    let mag = BigInt::from(v.magnitude().clone());
    let half = BigInt::from(1) << (shift as usize).saturating_sub(1);
    let q = if shift == 0 { mag } else { (mag + half) >> shift as usize };
    let q = if v.sign() == num_bigint::Sign::Minus { -q } else { q };
    if q > BigInt::from(fmt.max_raw()) {
        (fmt.max_raw(), true)
    } else if q < BigInt::from(fmt.min_raw()) {
        (fmt.min_raw(), true)
    } else {
        (i64::try_from(&q).unwrap(), false)
    }
}

/// `sum centroid(a_i) * centroid(w_i)`, rounded once into `fmt`.
pub fn oracle_dot(a: &[Code], w: &[Code], da: &TensorDictionary, dw: &TensorDictionary, fmt: QFormat) -> (i64, bool) {
    let wa: Vec<BigInt> = (0..32u8).map(|b| code_value(da, b)).collect();
    let ww: Vec<BigInt> = (0..32u8).map(|b| code_value(dw, b)).collect();
    let sum =
        a.iter().zip(w).fold(BigInt::from(0), |acc, (x, y)| acc + &wa[x.bits() as usize] * &ww[y.bits() as usize]);
    let frac = da.qformat.frac + dw.qformat.frac + 2 * EXTRA;
    round_into(&sum, frac - fmt.frac, fmt)
}

fn code_value(d: &TensorDictionary, bits: u8) -> BigInt {
    let c = Code::from_bits(bits).unwrap();
    if d.check_code(c).is_ok() {
        centroid(d, c)
    } else {
        BigInt::from(0)
    }
}

pub fn random_fit<R: Rng>(rng: &mut R) -> ExpFit {
    ExpFit { a: rng.gen_range(1.05..1.4), b: rng.gen_range(-0.99..0.5), max_int: 7 }
}

fn random_bins<R: Rng>(rng: &mut R, at_least_one: bool) -> Vec<u32> {
    let lo = usize::from(at_least_one);
    let n = rng.gen_range(lo..=8);
    let mut v: Vec<u32> = sample(rng, 38, n).into_iter().map(|i| 8 + i as u32).collect();
    v.sort_unstable();
    v
}

/// A dictionary with random scale, shift and outlier bins on `fit`; the
/// 16-bit format follows from them.
pub fn random_dict<R: Rng>(rng: &mut R, fit: ExpFit, with_outliers: bool) -> Arc<TensorDictionary> {
    loop {
        let s = 10f64.powf(rng.gen_range(-3.0..2.0));
        let m = if rng.gen_bool(0.2) { 0.0 } else { s * rng.gen_range(-4.0..4.0) };
        let pos = random_bins(rng, with_outliers);
        let neg = random_bins(rng, with_outliers);
        if let Ok(d) = TensorDictionary::from_parts(s, m, fit, &pos, &neg) {
            return Arc::new(d);
        }
    }
}

/// `n` valid codes, each an outlier with probability `p` where the tables allow.
pub fn random_codes<R: Rng>(rng: &mut R, d: &TensorDictionary, n: usize, p: f64) -> Vec<Code> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(p) {
                let signs: Vec<bool> = [false, true].into_iter().filter(|&s| !d.outlier_table(s).is_empty()).collect();
                if !signs.is_empty() {
                    let neg = signs[rng.gen_range(0..signs.len())];
                    return Code::outlier(neg, rng.gen_range(0..d.outlier_table(neg).len()) as u8);
                }
            }
            Code::gaussian(rng.gen_bool(0.5), rng.gen_range(0..8))
        })
        .collect()
}
