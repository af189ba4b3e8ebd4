//! Index-domain dot products.
//!
//! A Gaussian centroid is `theta * s * (a^k + b) + m`. Expanding the product
//! of two such centroids gives
//!
//! ```text
//! sigma sA sW a^(i+j)                  SoI
//! sigma sA sW b a^i                    SoA1
//! sigma sA sW b a^j                    SoW1
//! sigma sA sW b^2                      PoM1
//! thetaA sA mW a^i                     SoA2
//! thetaA sA mW b                       PoM2
//! thetaW sW mA a^j                     SoW2
//! thetaW sW mA b                       PoM3
//! mA mW                                PoM4
//! ```
//!
//! with `sigma = thetaA * thetaW`. The first four terms only need signed
//! occurrence counts per exponent; the next four only need per-vector sums,
//! known before the dot product starts. Pairs with an outlier operand take
//! the slow path: both centroids are multiplied and accumulated directly.
//!
//! Every term is carried exactly in 256-bit integers at
//! `fA + fW + 2 * CURVE_FRAC` fractional bits and rounded once at the end.

use ethnum::I256;

use crate::curve::{CurveConsts, CURVE_FRAC, GAUSS_LEVELS, SUM_LEVELS};
use crate::error::{MokeyError, Result};
use crate::exec::Exec;
use crate::fixed::{ceil_log2, QFormat};
use crate::quant::{encode_tensor, AuxSums, Code, QuantizedTensor, TensorDictionary};
use crate::tensor::Tensor;

/// Counter width of the functional engine.
pub const DEFAULT_COUNTER_BITS: u32 = 32;

/// Signed occurrence counters of one dot product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterFile {
    pub soi: [i64; SUM_LEVELS],
    pub soa1: [i64; GAUSS_LEVELS],
    pub sow1: [i64; GAUSS_LEVELS],
    pub pom1: i64,
    /// Gaussian pairs consumed. Not a hardware counter; it is known from the
    /// stream length and the outlier count.
    pub n_gauss: u64,
    pub counter_bits: u32,
}

impl CounterFile {
    pub fn new(counter_bits: u32) -> Result<Self> {
        if !(2..=63).contains(&counter_bits) {
            return Err(MokeyError::InvalidArgument(format!("counter width {counter_bits} outside 2..=63")));
        }
        Ok(Self {
            soi: [0; SUM_LEVELS],
            soa1: [0; GAUSS_LEVELS],
            sow1: [0; GAUSS_LEVELS],
            pom1: 0,
            n_gauss: 0,
            counter_bits,
        })
    }

    fn limit(&self) -> i64 {
        (1i64 << (self.counter_bits - 1)) - 1
    }

    /// Whether a Gaussian pair can be counted without any slot leaving the
    /// signed `counter_bits` range.
    pub fn fits(&self, a: Code, w: Code) -> bool {
        let (i, j, d) = slots(a, w);
        let (hi, lo) = (self.limit(), -self.limit() - 1);
        [self.soi[i + j], self.soa1[i], self.sow1[j], self.pom1].iter().all(|&v| (lo..=hi).contains(&(v + d)))
    }

    /// Count one pair of Gaussian codes.
    pub fn count(&mut self, a: Code, w: Code) -> Result<()> {
        debug_assert!(!a.is_outlier() && !w.is_outlier());
        if !self.fits(a, w) {
            return Err(MokeyError::CounterSaturated { bits: self.counter_bits });
        }
        let (i, j, d) = slots(a, w);
        self.soi[i + j] += d;
        self.soa1[i] += d;
        self.sow1[j] += d;
        self.pom1 += d;
        self.n_gauss += 1;
        Ok(())
    }

    /// Add another file's counts into this one (a drain into wider counters).
    pub fn absorb(&mut self, other: &CounterFile) -> Result<()> {
        let lim = self.limit() as i128;
        let add = |x: &mut i64, y: i64| -> Result<()> {
            let s = *x as i128 + y as i128;
            if s > lim || s < -lim - 1 {
                return Err(MokeyError::CounterSaturated { bits: self.counter_bits });
            }
            *x = s as i64;
            Ok(())
        };
        for k in 0..SUM_LEVELS {
            add(&mut self.soi[k], other.soi[k])?;
        }
        for k in 0..GAUSS_LEVELS {
            add(&mut self.soa1[k], other.soa1[k])?;
            add(&mut self.sow1[k], other.sow1[k])?;
        }
        add(&mut self.pom1, other.pom1)?;
        self.n_gauss += other.n_gauss;
        Ok(())
    }

    pub fn clear(&mut self) {
        *self = Self { counter_bits: self.counter_bits, ..Self::new(self.counter_bits).unwrap() };
    }

    pub fn is_clear(&self) -> bool {
        self.n_gauss == 0
    }

    /// `(sum soi, sum soa1, sum sow1, pom1)`; all four are equal.
    pub fn totals(&self) -> (i64, i64, i64, i64) {
        (self.soi.iter().sum(), self.soa1.iter().sum(), self.sow1.iter().sum(), self.pom1)
    }
}

fn slots(a: Code, w: Code) -> (usize, usize, i64) {
    let d = if a.is_negative() ^ w.is_negative() { -1 } else { 1 };
    (a.index() as usize, w.index() as usize, d)
}

/// Everything `finalize` needs besides the counters: the two dictionaries'
/// fixed-point parameters, the shared curve, and the output format.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConstants {
    pub s_a: i64,
    pub s_w: i64,
    pub m_a: i64,
    pub m_w: i64,
    pub fmt_a: QFormat,
    pub fmt_w: QFormat,
    pub curve: CurveConsts,
    pub out_fmt: QFormat,
    pow_curve: [i128; GAUSS_LEVELS],
    pow_table: [I256; SUM_LEVELS],
}

impl EngineConstants {
    pub fn new(da: &TensorDictionary, dw: &TensorDictionary, out_fmt: QFormat) -> Result<Self> {
        if da.curve != dw.curve {
            return Err(MokeyError::CurveMismatch);
        }
        let curve = da.curve;
        Ok(Self {
            s_a: da.s_raw,
            s_w: dw.s_raw,
            m_a: da.m_raw,
            m_w: dw.m_raw,
            fmt_a: da.qformat,
            fmt_w: dw.qformat,
            curve,
            out_fmt,
            pow_curve: std::array::from_fn(|k| curve.pow_curve(k)),
            pow_table: std::array::from_fn(|k| curve.pow_table(k)),
        })
    }

    /// Constants with [`default_output_format`] for vectors of length `n`.
    pub fn for_length(da: &TensorDictionary, dw: &TensorDictionary, n: usize) -> Result<Self> {
        Self::new(da, dw, default_output_format(da, dw, n)?)
    }

    /// Fractional bits of the exact breakdown terms.
    pub fn exact_frac(&self) -> u32 {
        self.fmt_a.frac + self.fmt_w.frac + 2 * CURVE_FRAC
    }

    pub fn pow_table(&self) -> &[I256; SUM_LEVELS] {
        &self.pow_table
    }
}

/// 16-bit output format wide enough for `n` products of the two largest
/// centroids: the product range plus `ceil(log2 n)` guard bits.
pub fn default_output_format(da: &TensorDictionary, dw: &TensorDictionary, n: usize) -> Result<QFormat> {
    let peak = |d: &TensorDictionary| {
        d.centroids().iter().map(|&(_, r)| r.unsigned_abs()).max().unwrap_or(0) as f64 * d.qformat.ulp()
    };
    let product = (peak(da) * peak(dw)).max(f64::MIN_POSITIVE);
    let guard = if n > 1 { ceil_log2(n as f64) } else { 0 };
    let bound = product * 2f64.powi(guard);
    QFormat::covering(16, bound, -bound)
}

/// The ten exact terms of one dot product, at [`EngineConstants::exact_frac`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Breakdown {
    pub soi: I256,
    pub soa1: I256,
    pub soa2: I256,
    pub sow1: I256,
    pub sow2: I256,
    pub pom1: I256,
    pub pom2: I256,
    pub pom3: I256,
    pub pom4: I256,
    pub outlier_acc: I256,
}

impl Breakdown {
    /// Sum of the terms in the listed order.
    pub fn total(&self) -> I256 {
        self.terms().iter().fold(I256::ZERO, |acc, (_, v)| acc + *v)
    }

    pub fn terms(&self) -> [(&'static str, I256); 10] {
        [
            ("soi", self.soi),
            ("soa1", self.soa1),
            ("soa2", self.soa2),
            ("sow1", self.sow1),
            ("sow2", self.sow2),
            ("pom1", self.pom1),
            ("pom2", self.pom2),
            ("pom3", self.pom3),
            ("pom4", self.pom4),
            ("outlier_acc", self.outlier_acc),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DotResult {
    /// Raw value in `out_fmt`.
    pub value: i64,
    pub out_fmt: QFormat,
    pub saturated: bool,
    pub breakdown: Breakdown,
    /// Fractional bits of the breakdown terms.
    pub exact_frac: u32,
    pub n_gauss: u64,
}

impl DotResult {
    pub fn to_f64(&self) -> f64 {
        self.value as f64 * self.out_fmt.ulp()
    }
}

/// Round-half-away-from-zero right shift.
pub fn round_shift_i256(v: I256, shift: u32) -> I256 {
    if shift == 0 {
        return v;
    }
    let half = I256::ONE << (shift - 1);
    let q = (v.abs() + half) >> shift;
    if v < 0 {
        -q
    } else {
        q
    }
}

/// Round an exact value at `frac` bits into `fmt`, saturating.
pub fn quantize_exact(v: I256, frac: u32, fmt: QFormat) -> (i64, bool) {
    let r = if frac >= fmt.frac { round_shift_i256(v, frac - fmt.frac) } else { v << (fmt.frac - frac) };
    let (lo, hi) = (I256::from(fmt.min_raw()), I256::from(fmt.max_raw()));
    if r > hi {
        (fmt.max_raw(), true)
    } else if r < lo {
        (fmt.min_raw(), true)
    } else {
        (r.as_i64(), false)
    }
}

/// Running state of one dot product.
#[derive(Debug, Clone)]
pub struct DotAccumulator {
    pub counters: CounterFile,
    pub outlier_acc: I256,
    /// Contributions of Gaussian codes paired with an outlier; subtracted
    /// from the precomputed vector sums at finalize.
    pub excluded_a: AuxSums,
    pub excluded_w: AuxSums,
}

impl DotAccumulator {
    pub fn new(counter_bits: u32) -> Result<Self> {
        Ok(Self {
            counters: CounterFile::new(counter_bits)?,
            outlier_acc: I256::ZERO,
            excluded_a: AuxSums::default(),
            excluded_w: AuxSums::default(),
        })
    }

    /// Route one code pair to the counters or the outlier MAC.
    pub fn accumulate_pair(&mut self, a: Code, w: Code, da: &TensorDictionary, dw: &TensorDictionary) -> Result<()> {
        if a.is_outlier() || w.is_outlier() {
            let pa = I256::from(da.exact_value(a)?);
            let pw = I256::from(dw.exact_value(w)?);
            self.outlier_acc += pa * pw;
            self.excluded_a.add(a, &da.curve);
            self.excluded_w.add(w, &dw.curve);
            Ok(())
        } else {
            self.counters.count(a, w)
        }
    }

    /// Combine the counters with the full-vector aux sums of both operands.
    pub fn finalize(&self, k: &EngineConstants, aux_a: &AuxSums, aux_w: &AuxSums) -> Result<DotResult> {
        finalize(
            &self.counters,
            self.outlier_acc,
            k,
            &restrict(aux_a, &self.excluded_a)?,
            &restrict(aux_w, &self.excluded_w)?,
        )
    }
}

fn restrict(full: &AuxSums, excluded: &AuxSums) -> Result<AuxSums> {
    if excluded.gauss > full.gauss {
        return Err(MokeyError::InvalidArgument("aux sums do not cover the streamed codes".into()));
    }
    Ok(AuxSums {
        pow_sum: full.pow_sum - excluded.pow_sum,
        sign_sum: full.sign_sum - excluded.sign_sum,
        gauss: full.gauss - excluded.gauss,
    })
}

/// Evaluate every term from counters and aux sums already restricted to the
/// Gaussian pairs.
pub fn finalize(
    cf: &CounterFile,
    outlier_acc: I256,
    k: &EngineConstants,
    aux_a: &AuxSums,
    aux_w: &AuxSums,
) -> Result<DotResult> {
    if aux_a.gauss != cf.n_gauss || aux_w.gauss != cf.n_gauss {
        return Err(MokeyError::InvalidArgument(format!(
            "aux sums cover {}/{} Gaussian codes but {} Gaussian pairs were counted",
            aux_a.gauss, aux_w.gauss, cf.n_gauss
        )));
    }
    let s2 = w(k.s_a) * w(k.s_w);
    let b = w(k.curve.b_curve());
    let m_a = w(k.m_a) << CURVE_FRAC;
    let m_w = w(k.m_w) << CURVE_FRAC;
    let dot_pow = |c: &[i64]| c.iter().zip(&k.pow_curve).fold(I256::ZERO, |acc, (&n, &p)| acc + w(n) * w(p));
    let soi = cf.soi.iter().zip(&k.pow_table).fold(I256::ZERO, |acc, (&n, &p)| acc + w(n) * p);

    let breakdown = Breakdown {
        soi: s2 * soi,
        soa1: s2 * b * dot_pow(&cf.soa1),
        soa2: w(k.s_a) * m_w * w(aux_a.pow_sum),
        sow1: s2 * b * dot_pow(&cf.sow1),
        sow2: w(k.s_w) * m_a * w(aux_w.pow_sum),
        pom1: s2 * b * b * w(cf.pom1),
        pom2: w(k.s_a) * m_w * b * w(aux_a.sign_sum),
        pom3: w(k.s_w) * m_a * b * w(aux_w.sign_sum),
        pom4: w(cf.n_gauss) * m_a * m_w,
        outlier_acc,
    };
    let exact_frac = k.exact_frac();
    let (value, saturated) = quantize_exact(breakdown.total(), exact_frac, k.out_fmt);
    Ok(DotResult { value, out_fmt: k.out_fmt, saturated, breakdown, exact_frac, n_gauss: cf.n_gauss })
}

fn w(x: impl Into<I256>) -> I256 {
    x.into()
}

/// Dot product of two code vectors bound to their dictionaries.
pub fn dot(
    a: &[Code],
    w: &[Code],
    da: &TensorDictionary,
    dw: &TensorDictionary,
    k: &EngineConstants,
) -> Result<DotResult> {
    if a.len() != w.len() {
        return Err(MokeyError::ShapeMismatch { expected: a.len(), found: w.len() });
    }
    let aux_a = AuxSums::of(a.iter().copied(), &da.curve);
    let aux_w = AuxSums::of(w.iter().copied(), &dw.curve);
    dot_with_aux(a, w, da, dw, k, &aux_a, &aux_w)
}

/// [`dot`] with the operands' aux sums supplied by the caller.
pub fn dot_with_aux(
    a: &[Code],
    w: &[Code],
    da: &TensorDictionary,
    dw: &TensorDictionary,
    k: &EngineConstants,
    aux_a: &AuxSums,
    aux_w: &AuxSums,
) -> Result<DotResult> {
    if a.len() != w.len() {
        return Err(MokeyError::ShapeMismatch { expected: a.len(), found: w.len() });
    }
    let mut acc = DotAccumulator::new(DEFAULT_COUNTER_BITS)?;
    for (&x, &y) in a.iter().zip(w) {
        acc.accumulate_pair(x, y, da, dw)?;
    }
    acc.finalize(k, aux_a, aux_w)
}

/// Output of a quantized matrix product.
#[derive(Debug, Clone)]
pub struct GemmOutput {
    pub rows: usize,
    pub cols: usize,
    /// Row-major dot results.
    pub results: Vec<DotResult>,
    pub out_fmt: QFormat,
}

impl GemmOutput {
    pub fn saturated(&self) -> usize {
        self.results.iter().filter(|r| r.saturated).count()
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        let raw = self.results.iter().map(|r| r.value as i16).collect();
        Tensor::from_fx16(vec![self.rows, self.cols], raw, self.out_fmt)
    }
}

/// `A [M, K] x W [K, N]`. Output elements are independent and computed in
/// parallel under [`Exec::Parallel`].
pub fn gemm(qa: &QuantizedTensor, qw: &QuantizedTensor, out_fmt: Option<QFormat>, exec: Exec) -> Result<GemmOutput> {
    let (m, ka) = qa.matrix_dims();
    let (kw, n) = qw.matrix_dims();
    if ka != kw {
        return Err(MokeyError::ShapeMismatch { expected: ka, found: kw });
    }
    let (da, dw) = (qa.dict().as_ref(), qw.dict().as_ref());
    let out_fmt = match out_fmt {
        Some(f) => f,
        None => default_output_format(da, dw, ka)?,
    };
    let k = EngineConstants::new(da, dw, out_fmt)?;
    let cols: Vec<Vec<Code>> = (0..n).map(|j| qw.column(j)).collect();
    let results = exec.try_map_range(m * n, |idx| {
        let (i, j) = (idx / n, idx % n);
        dot_with_aux(qa.row(i), &cols[j], da, dw, &k, &qa.row_aux(i), &qw.col_aux(j))
    })?;
    Ok(GemmOutput { rows: m, cols: n, results, out_fmt })
}

/// Encode a layer output for the next layer; its aux sums are computed as
/// part of building the quantized tensor.
pub fn requantize(out: &Tensor, dict_next: std::sync::Arc<TensorDictionary>, exec: Exec) -> Result<QuantizedTensor> {
    encode_tensor(out, dict_next, exec)
}
