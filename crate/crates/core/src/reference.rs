//! Centroid multiply-accumulate: the direct evaluation the index engine must
//! reproduce. Every code is expanded to its centroid and the products are
//! summed exactly, then rounded once into the output format.

use ethnum::I256;

use crate::engine::quantize_exact;
use crate::error::{MokeyError, Result};
use crate::exec::Exec;
use crate::fixed::QFormat;
use crate::quant::{Code, QuantizedTensor, TensorDictionary};

/// Exact `sum decode(a_i) * decode(w_i)` at `da.exact_frac() + dw.exact_frac()`.
pub fn mac_exact(a: &[Code], w: &[Code], da: &TensorDictionary, dw: &TensorDictionary) -> Result<I256> {
    if a.len() != w.len() {
        return Err(MokeyError::ShapeMismatch { expected: a.len(), found: w.len() });
    }
    a.iter()
        .zip(w)
        .try_fold(I256::ZERO, |acc, (&x, &y)| Ok(acc + I256::from(da.exact_value(x)?) * I256::from(dw.exact_value(y)?)))
}

/// Rounded, saturated `(raw, saturated)` in `fmt`.
pub fn mac_dot(
    a: &[Code],
    w: &[Code],
    da: &TensorDictionary,
    dw: &TensorDictionary,
    fmt: QFormat,
) -> Result<(i64, bool)> {
    Ok(quantize_exact(mac_exact(a, w, da, dw)?, da.exact_frac() + dw.exact_frac(), fmt))
}

/// Row-major raw outputs of `A [M, K] x W [K, N]`.
pub fn mac_gemm(qa: &QuantizedTensor, qw: &QuantizedTensor, fmt: QFormat, exec: Exec) -> Result<Vec<i64>> {
    let (m, ka) = qa.matrix_dims();
    let (kw, n) = qw.matrix_dims();
    if ka != kw {
        return Err(MokeyError::ShapeMismatch { expected: ka, found: kw });
    }
    let cols: Vec<Vec<Code>> = (0..n).map(|j| qw.column(j)).collect();
    exec.try_map_range(m * n, |idx| mac_dot(qa.row(idx / n), &cols[idx % n], qa.dict(), qw.dict(), fmt).map(|(v, _)| v))
}
