//! Dense tensors, the `MKYT` container, and summary statistics.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MKYT" | u16 version=1 | u8 dtype | u8 rank | rank x u32 extents | [u8 frac if fx16] | data
//! ```
//!
//! dtype codes: 0 = f32, 1 = f16, 2 = fx16 (signed 16-bit fixed point).

use std::fs;
use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{MokeyError, Result};
use crate::fixed::QFormat;

pub const TENSOR_MAGIC: [u8; 4] = *b"MKYT";
pub const TENSOR_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F16,
    Fx16,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F16 => 1,
            DType::Fx16 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F16),
            2 => Ok(DType::Fx16),
            other => Err(MokeyError::UnknownDtype(other)),
        }
    }

    pub fn elem_bytes(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 | DType::Fx16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F16(Vec<f16>),
    Fx16 { raw: Vec<i16>, frac: u8 },
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F16(v) => v.len(),
            TensorData::Fx16 { raw, .. } => raw.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F16(_) => DType::F16,
            TensorData::Fx16 { .. } => DType::Fx16,
        }
    }
}

/// Row-major dense tensor. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

pub(crate) fn element_count(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(MokeyError::InvalidShape("rank must be at least 1".into()));
    }
    if shape.len() > u8::MAX as usize {
        return Err(MokeyError::InvalidShape(format!("rank {} exceeds 255", shape.len())));
    }
    shape.iter().try_fold(1usize, |acc, &d| {
        if d == 0 || d > u32::MAX as usize {
            return Err(MokeyError::InvalidShape(format!("extent {d} out of range")));
        }
        acc.checked_mul(d).ok_or_else(|| MokeyError::InvalidShape("element count overflows".into()))
    })
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(MokeyError::ShapeMismatch { expected, found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    /// Fixed-point tensor in a 16-bit format.
    pub fn from_fx16(shape: Vec<usize>, raw: Vec<i16>, fmt: QFormat) -> Result<Self> {
        if fmt.total_bits != 16 {
            return Err(MokeyError::InvalidArgument(format!(
                "fx16 tensors need a 16-bit format, got {}",
                fmt.total_bits
            )));
        }
        Self::new(shape, TensorData::Fx16 { raw, frac: fmt.frac as u8 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The 16-bit format of an fx16 tensor.
    pub fn qformat(&self) -> Option<QFormat> {
        match &self.data {
            TensorData::Fx16 { frac, .. } => Some(QFormat { total_bits: 16, frac: *frac as u32 }),
            _ => None,
        }
    }

    /// All elements widened to `f64` (f16 goes through f32 first).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F16(v) => v.iter().map(|&x| x.to_f32() as f64).collect(),
            TensorData::Fx16 { raw, frac } => {
                let scale = (-(*frac as f64)).exp2();
                raw.iter().map(|&x| x as f64 * scale).collect()
            }
        }
    }

    /// Interpret as a matrix `[rows, cols]`, folding leading extents into rows.
    pub fn matrix_dims(&self) -> (usize, usize) {
        let cols = *self.shape.last().expect("rank >= 1");
        (self.len() / cols, cols)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.dtype();
        let mut out = Vec::with_capacity(16 + 4 * self.shape.len() + self.len() * dtype.elem_bytes());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.push(dtype.code());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::Fx16 { raw, frac } => {
                out.push(*frac);
                raw.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.array::<4>()?;
        if magic != TENSOR_MAGIC {
            return Err(MokeyError::BadMagic { expected: TENSOR_MAGIC, found: magic });
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != TENSOR_VERSION {
            return Err(MokeyError::UnsupportedVersion(version));
        }
        let dtype = DType::from_code(r.u8()?)?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(r.array()?) as usize);
        }
        let count = element_count(&shape)?;
        let frac = if dtype == DType::Fx16 { Some(r.u8()?) } else { None };
        let payload = r.rest();
        let expected = count
            .checked_mul(dtype.elem_bytes())
            .ok_or_else(|| MokeyError::InvalidShape("payload size overflows".into()))?;
        if payload.len() < expected {
            return Err(MokeyError::Truncated { expected, found: payload.len() });
        }
        if payload.len() > expected {
            return Err(MokeyError::ShapeMismatch { expected: count, found: payload.len() / dtype.elem_bytes() });
        }
        let data = match dtype {
            DType::F32 => {
                TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::F16 => {
                TensorData::F16(payload.chunks_exact(2).map(|c| f16::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::Fx16 => TensorData::Fx16 {
                raw: payload.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())).collect(),
                frac: frac.unwrap(),
            },
        };
        Tensor::new(shape, data)
    }
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, t.to_bytes())?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Tensor::from_bytes(&fs::read(path)?)
}

/// Little cursor over a byte slice that reports truncation.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(MokeyError::Truncated { expected: self.pos + n, found: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}

/// Population statistics of a tensor's elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl TensorStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(MokeyError::Empty("statistics of an empty tensor"));
        }
        let n = values.len() as f64;
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut sum = 0.0;
        for &v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        let mean = (sum / n).clamp(min, max);
        let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self { mean, std: var.sqrt(), min, max, count: values.len() })
    }
}

pub fn compute_stats(t: &Tensor) -> Result<TensorStats> {
    TensorStats::from_values(&t.to_f64_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn f32_round_trip_is_byte_identical() {
        let t = Tensor::from_f32(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, -0.0, f32::MAX]).unwrap();
        let bytes = t.to_bytes();
        let back = Tensor::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.shape(), &[2, 3]);
    }

    #[test]
    fn f16_and_fx16_round_trip() {
        let h = Tensor::new(vec![3], TensorData::F16(vec![f16::from_f32(0.5), f16::NAN, f16::MIN])).unwrap();
        assert_eq!(Tensor::from_bytes(&h.to_bytes()).unwrap().to_bytes(), h.to_bytes());
        let q = Tensor::from_fx16(vec![2, 2], vec![-32768, 0, 1, 32767], QFormat::q16(11).unwrap()).unwrap();
        let back = Tensor::from_bytes(&q.to_bytes()).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.qformat().unwrap().frac, 11);
    }

    #[test]
    fn header_errors_are_distinct() {
        let t = Tensor::from_f32(vec![4], vec![1.0; 4]).unwrap();
        let mut bad = t.to_bytes();
        bad[0] = b'X';
        assert!(matches!(Tensor::from_bytes(&bad), Err(MokeyError::BadMagic { .. })));

        let good = t.to_bytes();
        let short = &good[..good.len() - 3];
        assert!(matches!(Tensor::from_bytes(short), Err(MokeyError::Truncated { .. })));

        let mut long = good.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(Tensor::from_bytes(&long), Err(MokeyError::ShapeMismatch { .. })));

        let mut dtype = good.clone();
        dtype[6] = 9;
        assert!(matches!(Tensor::from_bytes(&dtype), Err(MokeyError::UnknownDtype(9))));

        assert!(matches!(
            Tensor::from_f32(vec![2, 2], vec![0.0; 3]),
            Err(MokeyError::ShapeMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn stats_examples() {
        let zeros = Tensor::from_f32(vec![5], vec![0.0; 5]).unwrap();
        let s = compute_stats(&zeros).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (0.0, 0.0, 0.0, 0.0));

        let pm = Tensor::from_f32(vec![2], vec![-1.0, 1.0]).unwrap();
        let s = compute_stats(&pm).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (0.0, 1.0, -1.0, 1.0));

        assert!(matches!(TensorStats::from_values(&[]), Err(MokeyError::Empty(_))));
    }

    #[test]
    fn stats_of_standard_normal_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..50_000).map(|_| rng.sample(StandardNormal)).collect();
        let s = TensorStats::from_values(&v).unwrap();
        assert!(s.mean.abs() < 0.02, "mean {}", s.mean);
        assert!((s.std - 1.0).abs() < 0.02, "std {}", s.std);
    }

    proptest! {
        #[test]
        fn stats_permutation_invariant(mut v in prop::collection::vec(-1.0e3f64..1.0e3, 1..200), seed in any::<u64>()) {
            let a = TensorStats::from_values(&v).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..v.len()).rev() {
                v.swap(i, rng.gen_range(0..=i));
            }
            let b = TensorStats::from_values(&v).unwrap();
            prop_assert_eq!(a.min, b.min);
            prop_assert_eq!(a.max, b.max);
            prop_assert!((a.mean - b.mean).abs() <= 1e-9 * a.mean.abs().max(1.0));
            prop_assert!((a.std - b.std).abs() <= 1e-9 * a.std.max(1.0));
            prop_assert!(a.min <= a.mean && a.mean <= a.max && a.std >= 0.0);
        }
    }
}
