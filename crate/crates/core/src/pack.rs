//! Packed off-chip layout: a dense nibble area plus an outlier-position area.
//!
//! Every element stores its `(sign, index)` nibble, element `2k` in the low
//! half of byte `k`. Elements are split into groups; for each group the
//! outlier area holds a count byte followed by one 6-bit in-group offset per
//! outlier, packed MSB-first and zero-padded to the next byte. The value
//! area alone decodes every element as Gaussian; the outlier area only flips
//! the dictionary bit.
//!
//! File: `"MKYP" | u16 version | u64 count | u32 group size | u64 value bytes | values | outlier area`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{MokeyError, Result};
use crate::exec::Exec;
use crate::quant::{Code, QuantizedTensor, TensorDictionary};
use crate::tensor::Reader;

pub const PACK_MAGIC: [u8; 4] = *b"MKYP";
pub const PACK_VERSION: u16 = 1;
pub const DEFAULT_GROUP_SIZE: usize = 64;
/// Offsets are 6 bits wide, which caps the group size.
pub const MAX_GROUP_SIZE: usize = 64;
const OFFSET_BITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedTensor {
    pub element_count: usize,
    pub group_size: usize,
    pub value_area: Vec<u8>,
    pub ot_area: Vec<u8>,
}

fn check_group_size(g: usize) -> Result<()> {
    if !(1..=MAX_GROUP_SIZE).contains(&g) {
        return Err(MokeyError::InvalidArgument(format!("group size {g} outside 1..={MAX_GROUP_SIZE}")));
    }
    Ok(())
}

/// MSB-first bit writer over a byte vector.
struct BitWriter {
    bytes: Vec<u8>,
    bits: usize,
}

impl BitWriter {
    fn push(&mut self, value: u8, width: usize) {
        for b in (0..width).rev() {
            if self.bits % 8 == 0 {
                self.bytes.push(0);
            }
            let bit = (value >> b) & 1;
            *self.bytes.last_mut().unwrap() |= bit << (7 - self.bits % 8);
            self.bits += 1;
        }
    }
}

fn read_bits(bytes: &[u8], start_bit: usize, width: usize) -> u8 {
    (0..width).fold(0u8, |acc, i| {
        let bit = start_bit + i;
        (acc << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1)
    })
}

/// Bytes of one group's outlier record.
fn group_record_len(count: usize) -> usize {
    1 + (count * OFFSET_BITS).div_ceil(8)
}

pub fn pack(q: &QuantizedTensor, group_size: usize, exec: Exec) -> Result<PackedTensor> {
    pack_codes(q.codes(), group_size, exec)
}

pub fn pack_codes(codes: &[Code], group_size: usize, exec: Exec) -> Result<PackedTensor> {
    check_group_size(group_size)?;
    let value_area = exec.map_slice(&codes.chunks(2).collect::<Vec<_>>(), |pair| {
        pair[0].nibble() | pair.get(1).map_or(0, |c| c.nibble() << 4)
    });
    let records = exec.map_slice(&codes.chunks(group_size).collect::<Vec<_>>(), |group| {
        let offsets: Vec<u8> = group.iter().enumerate().filter(|(_, c)| c.is_outlier()).map(|(i, _)| i as u8).collect();
        let mut w = BitWriter { bytes: vec![offsets.len() as u8], bits: 8 };
        for &o in &offsets {
            w.push(o, OFFSET_BITS);
        }
        w.bytes
    });
    Ok(PackedTensor { element_count: codes.len(), group_size, value_area, ot_area: records.concat() })
}

impl PackedTensor {
    pub fn groups(&self) -> usize {
        self.element_count.div_ceil(self.group_size)
    }

    /// Every element read from the value area alone, as a Gaussian code.
    pub fn gaussian_view(&self) -> Vec<Code> {
        (0..self.element_count)
            .map(|i| {
                let nib = (self.value_area[i / 2] >> (4 * (i % 2))) & 0x0f;
                Code::gaussian(nib & 0x08 != 0, nib & 0x07)
            })
            .collect()
    }

    /// Outlier offsets per group, validated.
    pub fn outlier_offsets(&self) -> Result<Vec<Vec<u8>>> {
        let mut out = Vec::with_capacity(self.groups());
        let mut pos = 0;
        for g in 0..self.groups() {
            let len = self.group_size.min(self.element_count - g * self.group_size);
            let count = *self
                .ot_area
                .get(pos)
                .ok_or_else(|| MokeyError::MalformedPacked(format!("outlier area ends before group {g}")))?
                as usize;
            if count > len {
                return Err(MokeyError::MalformedPacked(format!(
                    "group {g} claims {count} outliers in {len} elements"
                )));
            }
            let rec = group_record_len(count);
            let body = self
                .ot_area
                .get(pos + 1..pos + rec)
                .ok_or_else(|| MokeyError::MalformedPacked(format!("group {g} record truncated")))?;
            let offsets: Vec<u8> = (0..count).map(|i| read_bits(body, i * OFFSET_BITS, OFFSET_BITS)).collect();
            if offsets.windows(2).any(|w| w[0] >= w[1]) || offsets.last().is_some_and(|&o| o as usize >= len) {
                return Err(MokeyError::MalformedPacked(format!("group {g} offsets {offsets:?} invalid")));
            }
            let used = count * OFFSET_BITS;
            if used % 8 != 0 && read_bits(body, used, 8 - used % 8) != 0 {
                return Err(MokeyError::MalformedPacked(format!("group {g} padding is not zero")));
            }
            out.push(offsets);
            pos += rec;
        }
        if pos != self.ot_area.len() {
            return Err(MokeyError::MalformedPacked(format!(
                "{} trailing bytes after the last group",
                self.ot_area.len() - pos
            )));
        }
        Ok(out)
    }

    pub fn outlier_count(&self) -> Result<usize> {
        Ok(self.outlier_offsets()?.iter().map(Vec::len).sum())
    }

    /// Payload bytes: value area plus outlier area, header excluded.
    pub fn payload_bytes(&self) -> usize {
        self.value_area.len() + self.ot_area.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(26 + self.payload_bytes());
        out.extend_from_slice(&PACK_MAGIC);
        out.extend_from_slice(&PACK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.element_count as u64).to_le_bytes());
        out.extend_from_slice(&(self.group_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.value_area.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.value_area);
        out.extend_from_slice(&self.ot_area);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.array::<4>()?;
        if magic != PACK_MAGIC {
            return Err(MokeyError::BadMagic { expected: PACK_MAGIC, found: magic });
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != PACK_VERSION {
            return Err(MokeyError::UnsupportedVersion(version));
        }
        let element_count = u64::from_le_bytes(r.array()?) as usize;
        let group_size = u32::from_le_bytes(r.array()?) as usize;
        check_group_size(group_size).map_err(|e| MokeyError::MalformedPacked(e.to_string()))?;
        let value_len = u64::from_le_bytes(r.array()?) as usize;
        if value_len != element_count.div_ceil(2) {
            return Err(MokeyError::MalformedPacked(format!(
                "value area of {value_len} bytes for {element_count} elements"
            )));
        }
        let value_area = r.take(value_len)?.to_vec();
        if element_count % 2 == 1 && value_area[value_len - 1] >> 4 != 0 {
            return Err(MokeyError::MalformedPacked("odd tail nibble is not zero".into()));
        }
        let p = Self { element_count, group_size, value_area, ot_area: r.rest().to_vec() };
        p.outlier_offsets()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Rebuild the 5-bit codes.
pub fn unpack_codes(p: &PackedTensor) -> Result<Vec<Code>> {
    let mut codes = p.gaussian_view();
    for (g, offsets) in p.outlier_offsets()?.iter().enumerate() {
        for &o in offsets {
            let c = &mut codes[g * p.group_size + o as usize];
            *c = Code::outlier(c.is_negative(), c.index());
        }
    }
    Ok(codes)
}

pub fn unpack(p: &PackedTensor, shape: Vec<usize>, dict: Arc<TensorDictionary>) -> Result<QuantizedTensor> {
    QuantizedTensor::new(shape, unpack_codes(p)?, dict)
}

/// Storage figures of a packed tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackMeasure {
    /// `4 n + 8 groups + 6 outliers`.
    pub total_bits: u64,
    /// `total_bits / n`: logical bits, before byte padding.
    pub bits_per_value: f64,
    /// Value and outlier area bytes as stored, padding included.
    pub payload_bytes: usize,
    pub outliers: usize,
    /// Against 32-bit floats, from `bits_per_value`.
    pub compression_vs_f32: f64,
}

pub fn measure(p: &PackedTensor) -> Result<PackMeasure> {
    if p.element_count == 0 {
        return Err(MokeyError::Empty("packed tensor"));
    }
    let outliers = p.outlier_count()?;
    let bits = 4 * p.element_count + 8 * p.groups() + OFFSET_BITS * outliers;
    let bits_per_value = bits as f64 / p.element_count as f64;
    Ok(PackMeasure {
        total_bits: bits as u64,
        bits_per_value,
        payload_bytes: p.payload_bytes(),
        outliers,
        compression_vs_f32: 32.0 / bits_per_value,
    })
}
