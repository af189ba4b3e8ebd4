//! Per-tensor dictionaries and 5-bit encoding.
//!
//! A tensor dictionary is the fitted curve scaled by the tensor's standard
//! deviation and shifted by its mean. The Gaussian half holds 8 magnitudes per
//! sign (curve indexes 0..=7). The outlier half holds up to 8 bins per sign,
//! chosen among curve indexes 8..=45 by how many profiled values land in them.
//!
//! A code is 5 bits: `[outlier | sign | index:3]`. For Gaussian codes the
//! index is the curve index. For outlier codes `(sign, index)` addresses the
//! outlier table of that sign, so the sign bit always equals the centroid's
//! sign relative to the mean.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::{CurveConsts, CURVE_FRAC, GAUSS_LEVELS};
use crate::error::{MokeyError, Result};
use crate::exec::Exec;
use crate::fixed::{round_shift_i128, to_fixed, to_fixed_checked, to_float, QFormat};
use crate::golden::{ExpFit, MAX_OUTLIER_INT};
use crate::tensor::{element_count, Reader, Tensor, TensorStats};

/// Outlier bins kept per sign.
pub const OUTLIER_BINS_PER_SIGN: usize = 8;
/// First curve index reserved for outliers.
pub const FIRST_OUTLIER_INT: u32 = GAUSS_LEVELS as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Code(u8);

impl Code {
    const OUTLIER: u8 = 0b1_0000;
    const SIGN: u8 = 0b0_1000;
    const INDEX: u8 = 0b0_0111;

    pub fn gaussian(negative: bool, index: u8) -> Self {
        debug_assert!(index < 8);
        Code(((negative as u8) << 3) | (index & Self::INDEX))
    }

    pub fn outlier(negative: bool, index: u8) -> Self {
        debug_assert!(index < 8);
        Code(Self::OUTLIER | ((negative as u8) << 3) | (index & Self::INDEX))
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits >= 32 {
            return Err(MokeyError::InvalidArgument(format!("code {bits:#x} wider than 5 bits")));
        }
        Ok(Code(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// The 4-bit `(sign, index)` part stored in the packed value area.
    pub fn nibble(self) -> u8 {
        self.0 & 0x0f
    }

    pub fn is_outlier(self) -> bool {
        self.0 & Self::OUTLIER != 0
    }

    pub fn is_negative(self) -> bool {
        self.0 & Self::SIGN != 0
    }

    pub fn index(self) -> u8 {
        self.0 & Self::INDEX
    }

    /// `+1` for a positive code, `-1` for a negative one.
    pub fn theta(self) -> i64 {
        if self.is_negative() {
            -1
        } else {
            1
        }
    }
}

/// One selected outlier bin: its curve index and its signed centroid in the
/// dictionary's format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierBin {
    pub int: u32,
    pub raw: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDictionary {
    /// Scale (tensor standard deviation).
    pub s: f64,
    /// Shift (tensor mean).
    pub m: f64,
    pub fit: ExpFit,
    pub curve: CurveConsts,
    pub qformat: QFormat,
    pub s_raw: i64,
    pub m_raw: i64,
    /// Rounded `s * (a^k + b)` for `k = 0..=7`.
    pub g_magnitudes: [i64; GAUSS_LEVELS],
    /// Positive outlier bins, curve index ascending; position is the code index.
    pub ot_pos: Vec<OutlierBin>,
    /// Negative outlier bins, curve index ascending.
    pub ot_neg: Vec<OutlierBin>,
}

impl TensorDictionary {
    /// Assemble a dictionary from its scale, shift and selected outlier ints.
    ///
    /// The 16-bit format is the widest-fraction format that holds every
    /// centroid.
    pub fn from_parts(s: f64, m: f64, fit: ExpFit, pos_ints: &[u32], neg_ints: &[u32]) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() || !m.is_finite() {
            return Err(MokeyError::InvalidArgument(format!("bad scale/shift s={s} m={m}")));
        }
        let curve = CurveConsts::from_fit(&fit)?;
        if curve.value_curve(0) < 0 {
            return Err(MokeyError::InvalidArgument(format!(
                "curve offset {} makes the innermost magnitude negative",
                fit.b
            )));
        }
        for ints in [pos_ints, neg_ints] {
            if ints.len() > OUTLIER_BINS_PER_SIGN
                || ints.windows(2).any(|w| w[0] >= w[1])
                || ints.iter().any(|&i| !(FIRST_OUTLIER_INT..=MAX_OUTLIER_INT).contains(&i))
            {
                return Err(MokeyError::InvalidArgument(format!("bad outlier bins {ints:?}")));
            }
        }
        let last = GAUSS_LEVELS as u32 - 1;
        let hi_int = pos_ints.last().copied().unwrap_or(last);
        let lo_int = neg_ints.last().copied().unwrap_or(last);
        let hi = m + s * curve.value_f64(hi_int);
        let lo = m - s * curve.value_f64(lo_int);
        let mut fmt = QFormat::covering(16, hi, lo)?;
        loop {
            if let Some(d) = Self::try_format(s, m, fit, curve, fmt, pos_ints, neg_ints) {
                return Ok(d);
            }
            if fmt.frac == 0 {
                return Err(MokeyError::InvalidArgument(format!(
                    "centroids of s={s} m={m} do not fit a 16-bit format"
                )));
            }
            fmt.frac -= 1;
        }
    }

    fn try_format(
        s: f64,
        m: f64,
        fit: ExpFit,
        curve: CurveConsts,
        fmt: QFormat,
        pos_ints: &[u32],
        neg_ints: &[u32],
    ) -> Option<Self> {
        let s_fx = to_fixed_checked(s, fmt);
        let m_fx = to_fixed_checked(m, fmt);
        if s_fx.saturated || m_fx.saturated {
            return None;
        }
        let (s_raw, m_raw) = (s_fx.raw, m_fx.raw);
        let mut g = [0i64; GAUSS_LEVELS];
        for (k, slot) in g.iter_mut().enumerate() {
            *slot = round_shift_i128(s_raw as i128 * curve.value_curve(k), CURVE_FRAC as i32) as i64;
        }
        let top = g[GAUSS_LEVELS - 1];
        if fmt.saturate((m_raw + top) as i128).saturated || fmt.saturate((m_raw - top) as i128).saturated {
            return None;
        }
        let (s_q, m_q) = (to_float(s_raw, fmt), to_float(m_raw, fmt));
        let bins = |ints: &[u32], sign: f64| -> Option<Vec<OutlierBin>> {
            ints.iter()
                .map(|&int| {
                    let r = to_fixed_checked(m_q + sign * s_q * curve.value_f64(int), fmt);
                    (!r.saturated).then_some(OutlierBin { int, raw: r.raw })
                })
                .collect()
        };
        Some(Self {
            s,
            m,
            fit,
            curve,
            qformat: fmt,
            s_raw,
            m_raw,
            g_magnitudes: g,
            ot_pos: bins(pos_ints, 1.0)?,
            ot_neg: bins(neg_ints, -1.0)?,
        })
    }

    /// Constant tensors produce `s = 0`: every Gaussian code decodes to `m`.
    pub fn is_degenerate(&self) -> bool {
        self.s_raw == 0
    }

    pub fn outlier_table(&self, negative: bool) -> &[OutlierBin] {
        if negative {
            &self.ot_neg
        } else {
            &self.ot_pos
        }
    }

    /// All selected outlier curve indexes, ascending (each sign contributes).
    pub fn ot_ints(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.ot_pos.iter().chain(&self.ot_neg).map(|b| b.int).collect();
        v.sort_unstable();
        v
    }

    pub fn check_code(&self, code: Code) -> Result<()> {
        if code.is_outlier() {
            let len = self.outlier_table(code.is_negative()).len();
            if code.index() as usize >= len {
                return Err(MokeyError::OutlierIndex { index: code.index(), len });
            }
        }
        Ok(())
    }

    /// Centroid of a code in the dictionary's 16-bit format.
    pub fn decode(&self, code: Code) -> Result<i64> {
        self.check_code(code)?;
        Ok(if code.is_outlier() {
            self.outlier_table(code.is_negative())[code.index() as usize].raw
        } else {
            self.m_raw + code.theta() * self.g_magnitudes[code.index() as usize]
        })
    }

    /// Fractional bits of [`TensorDictionary::exact_value`].
    pub fn exact_frac(&self) -> u32 {
        self.qformat.frac + CURVE_FRAC
    }

    /// Unrounded centroid: `theta * s * (a^k + b) + m` for Gaussian codes,
    /// the stored 16-bit centroid for outliers.
    pub fn exact_value(&self, code: Code) -> Result<i128> {
        self.check_code(code)?;
        let m = (self.m_raw as i128) << CURVE_FRAC;
        Ok(if code.is_outlier() {
            (self.outlier_table(code.is_negative())[code.index() as usize].raw as i128) << CURVE_FRAC
        } else {
            code.theta() as i128 * self.s_raw as i128 * self.curve.value_curve(code.index() as usize) + m
        })
    }

    /// Every valid code with its 16-bit centroid.
    pub fn centroids(&self) -> Vec<(Code, i64)> {
        let mut out = Vec::with_capacity(32);
        for negative in [false, true] {
            for k in 0..GAUSS_LEVELS as u8 {
                let c = Code::gaussian(negative, k);
                out.push((c, self.decode(c).unwrap()));
            }
            for (i, bin) in self.outlier_table(negative).iter().enumerate() {
                out.push((Code::outlier(negative, i as u8), bin.raw));
            }
        }
        out
    }

    /// Preference among equidistant centroids: closer to the mean first, then
    /// Gaussian before outlier, positive before negative, lower index first.
    fn preference(&self, code: Code, raw: i64) -> (i64, bool, bool, u8) {
        ((raw - self.m_raw).abs(), code.is_outlier(), code.is_negative(), code.index())
    }

    pub fn encoder(&self) -> Encoder {
        let mut table: Vec<EncoderEntry> = self
            .centroids()
            .into_iter()
            .map(|(code, raw)| EncoderEntry { raw, code, pref: self.preference(code, raw) })
            .collect();
        table.sort_by_key(|e| (e.raw, e.pref));
        table.dedup_by_key(|e| e.raw);
        Encoder { table }
    }
}

#[derive(Debug, Clone, Copy)]
struct EncoderEntry {
    raw: i64,
    code: Code,
    pref: (i64, bool, bool, u8),
}

/// Nearest-centroid search over the sorted union of both dictionaries.
///
/// Comparing the input against every sorted centroid yields a run of zeros
/// followed by ones; the first one and its predecessor are the only two
/// candidates.
#[derive(Debug, Clone)]
pub struct Encoder {
    table: Vec<EncoderEntry>,
}

impl Encoder {
    pub fn encode_raw(&self, x: i64) -> Code {
        let t = &self.table;
        let i = t.partition_point(|e| e.raw < x);
        if i == 0 {
            return t[0].code;
        }
        if i == t.len() {
            return t[t.len() - 1].code;
        }
        let (lo, hi) = (t[i - 1], t[i]);
        match (x - lo.raw).cmp(&(hi.raw - x)) {
            std::cmp::Ordering::Less => lo.code,
            std::cmp::Ordering::Greater => hi.code,
            std::cmp::Ordering::Equal => {
                if lo.pref <= hi.pref {
                    lo.code
                } else {
                    hi.code
                }
            }
        }
    }

    /// Sorted distinct centroid values.
    pub fn sorted_centroids(&self) -> Vec<i64> {
        self.table.iter().map(|e| e.raw).collect()
    }
}

fn nearest_curve_int(mags: &[f64], d: f64) -> usize {
    let i = mags.partition_point(|&m| m < d);
    if i == 0 {
        0
    } else if i == mags.len() {
        mags.len() - 1
    } else if d - mags[i - 1] <= mags[i] - d {
        i - 1
    } else {
        i
    }
}

const PROFILE_CHUNK: usize = 1 << 15;
const CANDIDATE_INTS: usize = MAX_OUTLIER_INT as usize + 1;

/// Occupancy of every signed curve bin `0..=45` by nearest magnitude.
fn bin_occupancy(values: &[f64], s: f64, m: f64, curve: &CurveConsts, exec: Exec) -> [[u64; CANDIDATE_INTS]; 2] {
    let mags: Vec<f64> = (0..=MAX_OUTLIER_INT).map(|k| s * curve.value_f64(k)).collect();
    let chunks = values.len().div_ceil(PROFILE_CHUNK);
    let partial = exec.map_range(chunks, |c| {
        let mut h = [[0u64; CANDIDATE_INTS]; 2];
        let end = ((c + 1) * PROFILE_CHUNK).min(values.len());
        for &x in &values[c * PROFILE_CHUNK..end] {
            let d = x - m;
            h[(d < 0.0) as usize][nearest_curve_int(&mags, d.abs())] += 1;
        }
        h
    });
    partial.into_iter().fold([[0u64; CANDIDATE_INTS]; 2], |mut acc, h| {
        for sign in 0..2 {
            for k in 0..CANDIDATE_INTS {
                acc[sign][k] += h[sign][k];
            }
        }
        acc
    })
}

/// Highest-occupancy outlier bins of one sign, ties to the smaller index.
fn top_bins(hist: &[u64; CANDIDATE_INTS]) -> Vec<u32> {
    let mut cand: Vec<u32> = (FIRST_OUTLIER_INT..=MAX_OUTLIER_INT).collect();
    cand.sort_by_key(|&k| (std::cmp::Reverse(hist[k as usize]), k));
    cand.truncate(OUTLIER_BINS_PER_SIGN);
    cand.sort_unstable();
    cand
}

/// Fit the curve to one tensor's distribution.
pub fn build_tensor_dictionary(
    stats: &TensorStats,
    fit: &ExpFit,
    values: &[f64],
    exec: Exec,
) -> Result<TensorDictionary> {
    if stats.std == 0.0 {
        return TensorDictionary::from_parts(0.0, stats.mean, *fit, &[], &[]);
    }
    let curve = CurveConsts::from_fit(fit)?;
    let occ = bin_occupancy(values, stats.std, stats.mean, &curve, exec);
    TensorDictionary::from_parts(stats.std, stats.mean, *fit, &top_bins(&occ[0]), &top_bins(&occ[1]))
}

/// Pool activation samples and fit one dictionary to the pooled values.
pub fn profile_activations(samples: &[Tensor], fit: &ExpFit, exec: Exec) -> Result<TensorDictionary> {
    if samples.is_empty() {
        return Err(MokeyError::Empty("activation sample list"));
    }
    let pooled: Vec<f64> = samples.iter().flat_map(|t| t.to_f64_vec()).collect();
    let stats = TensorStats::from_values(&pooled)?;
    build_tensor_dictionary(&stats, fit, &pooled, exec)
}

/// Per-vector sums over Gaussian-coded positions: `sum theta * a^int` (at
/// [`CURVE_FRAC`]), `sum theta`, and the number of Gaussian codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuxSums {
    pub pow_sum: i128,
    pub sign_sum: i64,
    pub gauss: u64,
}

impl AuxSums {
    pub fn add(&mut self, code: Code, curve: &CurveConsts) {
        if !code.is_outlier() {
            self.pow_sum += code.theta() as i128 * curve.pow_curve(code.index() as usize);
            self.sign_sum += code.theta();
            self.gauss += 1;
        }
    }

    pub fn remove(&mut self, code: Code, curve: &CurveConsts) {
        if !code.is_outlier() {
            self.pow_sum -= code.theta() as i128 * curve.pow_curve(code.index() as usize);
            self.sign_sum -= code.theta();
            self.gauss -= 1;
        }
    }

    pub fn of(codes: impl IntoIterator<Item = Code>, curve: &CurveConsts) -> Self {
        let mut a = Self::default();
        codes.into_iter().for_each(|c| a.add(c, curve));
        a
    }
}

/// A tensor of 5-bit codes bound to its dictionary, with the auxiliary sums
/// for every row and column of its matrix view.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    shape: Vec<usize>,
    codes: Vec<Code>,
    dict: Arc<TensorDictionary>,
    aux: AuxSums,
    row_aux: Vec<AuxSums>,
    col_aux: Vec<AuxSums>,
}

impl QuantizedTensor {
    pub fn new(shape: Vec<usize>, codes: Vec<Code>, dict: Arc<TensorDictionary>) -> Result<Self> {
        let expected = element_count(&shape)?;
        if expected != codes.len() {
            return Err(MokeyError::ShapeMismatch { expected, found: codes.len() });
        }
        for &c in &codes {
            dict.check_code(c)?;
        }
        let cols = *shape.last().unwrap();
        let rows = codes.len() / cols;
        let curve = dict.curve;
        let row_aux: Vec<AuxSums> =
            (0..rows).map(|r| AuxSums::of(codes[r * cols..(r + 1) * cols].iter().copied(), &curve)).collect();
        let mut col_aux = vec![AuxSums::default(); cols];
        for (i, &c) in codes.iter().enumerate() {
            col_aux[i % cols].add(c, &curve);
        }
        let aux = AuxSums::of(codes.iter().copied(), &curve);
        Ok(Self { shape, codes, dict, aux, row_aux, col_aux })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn codes(&self) -> &[Code] {
        &self.codes
    }

    pub fn dict(&self) -> &Arc<TensorDictionary> {
        &self.dict
    }

    pub fn aux(&self) -> AuxSums {
        self.aux
    }

    pub fn row_aux(&self, r: usize) -> AuxSums {
        self.row_aux[r]
    }

    pub fn col_aux(&self, c: usize) -> AuxSums {
        self.col_aux[c]
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn matrix_dims(&self) -> (usize, usize) {
        let cols = *self.shape.last().unwrap();
        (self.codes.len() / cols, cols)
    }

    pub fn outlier_count(&self) -> usize {
        self.codes.iter().filter(|c| c.is_outlier()).count()
    }

    pub fn outlier_fraction(&self) -> f64 {
        self.outlier_count() as f64 / self.codes.len() as f64
    }

    pub fn row(&self, r: usize) -> &[Code] {
        let cols = *self.shape.last().unwrap();
        &self.codes[r * cols..(r + 1) * cols]
    }

    pub fn column(&self, c: usize) -> Vec<Code> {
        let cols = *self.shape.last().unwrap();
        self.codes.iter().skip(c).step_by(cols).copied().collect()
    }
}

/// Map every element to its nearest centroid over both dictionaries.
pub fn encode_tensor(t: &Tensor, dict: Arc<TensorDictionary>, exec: Exec) -> Result<QuantizedTensor> {
    encode_values(t.shape().to_vec(), &t.to_f64_vec(), dict, exec)
}

pub fn encode_values(
    shape: Vec<usize>,
    values: &[f64],
    dict: Arc<TensorDictionary>,
    exec: Exec,
) -> Result<QuantizedTensor> {
    let enc = dict.encoder();
    let fmt = dict.qformat;
    let chunks = values.len().div_ceil(PROFILE_CHUNK);
    let codes: Vec<Code> = exec
        .map_range(chunks, |c| {
            let end = ((c + 1) * PROFILE_CHUNK).min(values.len());
            values[c * PROFILE_CHUNK..end].iter().map(|&x| enc.encode_raw(to_fixed(x, fmt))).collect::<Vec<_>>()
        })
        .concat();
    QuantizedTensor::new(shape, codes, dict)
}

pub fn decode_code(code: Code, dict: &TensorDictionary) -> Result<i64> {
    dict.decode(code)
}

/// Centroid values as an fx16 tensor in the dictionary's format.
pub fn decode_tensor(q: &QuantizedTensor) -> Result<Tensor> {
    let raw = q.codes.iter().map(|&c| q.dict.decode(c).map(|v| v as i16)).collect::<Result<Vec<_>>>()?;
    Tensor::from_fx16(q.shape.clone(), raw, q.dict.qformat)
}

/// Sidecar document stored next to a code file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub shape: Vec<usize>,
    pub dictionary: TensorDictionary,
    /// `sum theta * a^int` over Gaussian codes, decimal, at the curve fraction.
    pub aux_pow_sum: String,
    pub aux_sign_sum: i64,
    pub aux_gauss: u64,
}

impl Sidecar {
    pub const VERSION: u32 = 1;

    pub fn of(q: &QuantizedTensor) -> Self {
        Self {
            version: Self::VERSION,
            shape: q.shape.clone(),
            dictionary: (*q.dict).clone(),
            aux_pow_sum: q.aux.pow_sum.to_string(),
            aux_sign_sum: q.aux.sign_sum,
            aux_gauss: q.aux.gauss,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        if sc.version != Self::VERSION {
            return Err(MokeyError::UnsupportedVersion(sc.version as u16));
        }
        Ok(sc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Rebind codes to this dictionary, checking the stored aux sums.
    pub fn attach(&self, codes: Vec<Code>) -> Result<QuantizedTensor> {
        let q = QuantizedTensor::new(self.shape.clone(), codes, Arc::new(self.dictionary.clone()))?;
        let stored = AuxSums {
            pow_sum: self
                .aux_pow_sum
                .parse()
                .map_err(|_| MokeyError::InvalidArgument(format!("bad aux sum {:?}", self.aux_pow_sum)))?,
            sign_sum: self.aux_sign_sum,
            gauss: self.aux_gauss,
        };
        if stored != q.aux {
            return Err(MokeyError::InvalidArgument("sidecar aux sums disagree with the codes".into()));
        }
        Ok(q)
    }
}

pub const CODES_MAGIC: [u8; 4] = *b"MKYC";
pub const CODES_VERSION: u16 = 1;

/// Unpacked code file: `"MKYC" | u16 version | u8 rank | rank x u32 | one byte per code`.
pub fn codes_to_bytes(shape: &[usize], codes: &[Code]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + codes.len());
    out.extend_from_slice(&CODES_MAGIC);
    out.extend_from_slice(&CODES_VERSION.to_le_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend(codes.iter().map(|c| c.bits()));
    out
}

pub fn codes_from_bytes(bytes: &[u8]) -> Result<(Vec<usize>, Vec<Code>)> {
    let mut r = Reader::new(bytes);
    let magic = r.array::<4>()?;
    if magic != CODES_MAGIC {
        return Err(MokeyError::BadMagic { expected: CODES_MAGIC, found: magic });
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != CODES_VERSION {
        return Err(MokeyError::UnsupportedVersion(version));
    }
    let rank = r.u8()? as usize;
    let shape = (0..rank).map(|_| r.array().map(|b| u32::from_le_bytes(b) as usize)).collect::<Result<Vec<_>>>()?;
    let expected: usize = shape.iter().product();
    let payload = r.rest();
    if payload.len() < expected {
        return Err(MokeyError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected || rank == 0 {
        return Err(MokeyError::ShapeMismatch { expected, found: payload.len() });
    }
    let codes = payload.iter().map(|&b| Code::from_bits(b)).collect::<Result<Vec<_>>>()?;
    Ok((shape, codes))
}

pub fn save_codes(q: &QuantizedTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, codes_to_bytes(&q.shape, &q.codes))?;
    Ok(())
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<Code>)> {
    codes_from_bytes(&fs::read(path)?)
}
