//! Cycle-approximate model of one tile: `gpe_count` Gaussian PEs sharing one
//! outlier/post-processing unit (OPP).
//!
//! Pair `p` of a dot stream goes to GPE `p % gpe_count`, so one cycle consumes
//! one pair per GPE. Outlier pairs in a cycle queue for the OPP; the lowest
//! flagged GPE goes first and the rest hold. A cycle with `c` outlier pairs
//! therefore lasts `max(1, c * opp_mac_cycles)` cycles.
//!
//! GPE counters are `counter_bits` wide. When a count would overflow, the GPE
//! drains its counters into wide shadow accumulators, costing
//! [`DRAIN_CYCLES`]. After the stream the OPP reduces each GPE's
//! `15 + 8 + 8 + 1` counter entries serially, then quantizes the output.
//!
//! Values come from the same counters and the same `finalize` as the index
//! engine; timing never changes them.

use std::fmt::Write as _;

use ethnum::I256;

use crate::curve::{GAUSS_LEVELS, SUM_LEVELS};
use crate::engine::{finalize, CounterFile, DotResult, EngineConstants};
use crate::error::{MokeyError, Result};
use crate::exec::Exec;
use crate::fixed::QFormat;
use crate::pack::{measure, pack_codes, DEFAULT_GROUP_SIZE};
use crate::quant::{AuxSums, Code, QuantizedTensor, TensorDictionary};

/// Cycles to drain one GPE's counters into the shadow accumulators.
pub const DRAIN_CYCLES: u64 = 32;
/// Counter entries per GPE reduced during post-processing.
pub const CRF_ENTRIES: u64 = (SUM_LEVELS + 2 * GAUSS_LEVELS + 1) as u64;
const SHADOW_BITS: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub gpe_count: usize,
    pub counter_bits: u32,
    pub postproc_cycles_per_entry: u64,
    pub opp_mac_cycles: u64,
    /// Cycles per output element in the output quantizer.
    pub quantize_cycles: u64,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self { gpe_count: 8, counter_bits: 8, postproc_cycles_per_entry: 1, opp_mac_cycles: 1, quantize_cycles: 1 }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.gpe_count) {
            return Err(MokeyError::InvalidArgument(format!("gpe count {} outside 1..=64", self.gpe_count)));
        }
        if !(2..=SHADOW_BITS).contains(&self.counter_bits) {
            return Err(MokeyError::InvalidArgument(format!(
                "counter width {} outside 2..={SHADOW_BITS}",
                self.counter_bits
            )));
        }
        if self.opp_mac_cycles == 0 {
            return Err(MokeyError::InvalidArgument("OPP MAC latency must be at least one cycle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimStats {
    pub total_cycles: u64,
    pub stream_cycles: u64,
    pub outlier_stall_cycles: u64,
    pub drain_cycles: u64,
    pub postproc_cycles: u64,
    pub drain_events: u64,
    pub bytes_moved: u64,
    pub gaussian_pairs: u64,
    pub outlier_pairs: u64,
    /// Longest single tile; equals `total_cycles` for one tile.
    pub makespan_cycles: u64,
    pub gpe_slots: u64,
}

impl SimStats {
    /// Gaussian pairs per GPE-cycle of the streaming phase.
    pub fn gpe_utilization(&self) -> f64 {
        if self.gpe_slots == 0 {
            0.0
        } else {
            self.gaussian_pairs as f64 / self.gpe_slots as f64
        }
    }

    fn add(&mut self, o: &SimStats) {
        self.total_cycles += o.total_cycles;
        self.stream_cycles += o.stream_cycles;
        self.outlier_stall_cycles += o.outlier_stall_cycles;
        self.drain_cycles += o.drain_cycles;
        self.postproc_cycles += o.postproc_cycles;
        self.drain_events += o.drain_events;
        self.bytes_moved += o.bytes_moved;
        self.gaussian_pairs += o.gaussian_pairs;
        self.outlier_pairs += o.outlier_pairs;
        self.gpe_slots += o.gpe_slots;
    }
}

/// Leading-one selection over per-GPE outlier flags (bit `i` is GPE `i`):
/// the lowest flagged GPE is served, every other flagged GPE holds.
pub fn schedule_outliers(flags: u64) -> (Option<usize>, u64) {
    if flags == 0 {
        return (None, 0);
    }
    let sel = flags.trailing_zeros() as usize;
    (Some(sel), flags & !(1u64 << sel))
}

/// GPEs in the order the OPP serves them, one per OPP slot.
pub fn outlier_service_order(mut flags: u64) -> Vec<usize> {
    let mut order = Vec::new();
    while let (Some(sel), holds) = schedule_outliers(flags) {
        order.push(sel);
        flags = holds;
    }
    order
}

struct Gpe {
    crf: CounterFile,
    shadow: CounterFile,
}

/// Stream one dot product through a tile.
pub fn simulate_dot_stream(
    a: &[Code],
    w: &[Code],
    da: &TensorDictionary,
    dw: &TensorDictionary,
    k: &EngineConstants,
    cfg: &TileConfig,
) -> Result<(SimStats, DotResult)> {
    cfg.validate()?;
    if a.len() != w.len() {
        return Err(MokeyError::ShapeMismatch { expected: a.len(), found: w.len() });
    }
    let mut gpes: Vec<Gpe> = (0..cfg.gpe_count)
        .map(|_| Ok(Gpe { crf: CounterFile::new(cfg.counter_bits)?, shadow: CounterFile::new(SHADOW_BITS)? }))
        .collect::<Result<_>>()?;
    let mut st = SimStats::default();
    let mut outlier_acc = I256::ZERO;
    let (mut excl_a, mut excl_w) = (AuxSums::default(), AuxSums::default());

    for (ca, cw) in a.chunks(cfg.gpe_count).zip(w.chunks(cfg.gpe_count)) {
        let mut flags = 0u64;
        for (g, (&x, &y)) in ca.iter().zip(cw).enumerate() {
            if x.is_outlier() || y.is_outlier() {
                flags |= 1 << g;
                continue;
            }
            let gpe = &mut gpes[g];
            if !gpe.crf.fits(x, y) {
                gpe.shadow.absorb(&gpe.crf)?;
                gpe.crf.clear();
                st.drain_events += 1;
                st.drain_cycles += DRAIN_CYCLES;
            }
            gpe.crf.count(x, y)?;
            st.gaussian_pairs += 1;
        }
        for g in outlier_service_order(flags) {
            let (x, y) = (ca[g], cw[g]);
            outlier_acc += I256::from(da.exact_value(x)?) * I256::from(dw.exact_value(y)?);
            excl_a.add(x, &da.curve);
            excl_w.add(y, &dw.curve);
        }
        let served = flags.count_ones() as u64;
        let cycles = (served * cfg.opp_mac_cycles).max(1);
        st.stream_cycles += 1;
        st.outlier_stall_cycles += cycles - 1;
        st.outlier_pairs += served;
    }
    st.gpe_slots = st.stream_cycles * cfg.gpe_count as u64;

    let mut total = CounterFile::new(SHADOW_BITS)?;
    for gpe in &gpes {
        total.absorb(&gpe.shadow)?;
        total.absorb(&gpe.crf)?;
    }
    st.postproc_cycles = cfg.gpe_count as u64 * CRF_ENTRIES * cfg.postproc_cycles_per_entry + cfg.quantize_cycles;
    st.total_cycles = st.stream_cycles + st.outlier_stall_cycles + st.drain_cycles + st.postproc_cycles;
    st.makespan_cycles = st.total_cycles;
    st.bytes_moved = stream_bytes(a)? + stream_bytes(w)? + 2;

    let sub = |full: AuxSums, ex: AuxSums| AuxSums {
        pow_sum: full.pow_sum - ex.pow_sum,
        sign_sum: full.sign_sum - ex.sign_sum,
        gauss: full.gauss - ex.gauss,
    };
    let aux_a = sub(AuxSums::of(a.iter().copied(), &da.curve), excl_a);
    let aux_w = sub(AuxSums::of(w.iter().copied(), &dw.curve), excl_w);
    let result = finalize(&total, outlier_acc, k, &aux_a, &aux_w)?;
    Ok((st, result))
}

fn stream_bytes(codes: &[Code]) -> Result<u64> {
    if codes.is_empty() {
        return Ok(0);
    }
    let p = pack_codes(codes, DEFAULT_GROUP_SIZE, Exec::Sequential)?;
    Ok(measure(&p)?.payload_bytes as u64)
}

/// Map `A [M, K] x W [K, N]` onto `tiles` tiles, output elements assigned
/// round-robin. Tiles run independently; their stats are summed and the
/// slowest tile gives the makespan. Returns row-major results.
pub fn simulate_layer(
    qa: &QuantizedTensor,
    qw: &QuantizedTensor,
    cfg: &TileConfig,
    tiles: usize,
    out_fmt: QFormat,
    exec: Exec,
) -> Result<(SimStats, Vec<DotResult>)> {
    cfg.validate()?;
    if tiles == 0 {
        return Err(MokeyError::InvalidArgument("need at least one tile".into()));
    }
    let (m, ka) = qa.matrix_dims();
    let (kw, n) = qw.matrix_dims();
    if ka != kw {
        return Err(MokeyError::ShapeMismatch { expected: ka, found: kw });
    }
    let (da, dw) = (qa.dict().as_ref(), qw.dict().as_ref());
    let k = EngineConstants::new(da, dw, out_fmt)?;
    let cols: Vec<Vec<Code>> = (0..n).map(|j| qw.column(j)).collect();
    let per_tile = exec.try_map_range(tiles, |t| {
        let mut st = SimStats::default();
        let mut out = Vec::new();
        for idx in (t..m * n).step_by(tiles) {
            let (s, r) = simulate_dot_stream(qa.row(idx / n), &cols[idx % n], da, dw, &k, cfg)?;
            st.add(&s);
            out.push((idx, r));
        }
        st.makespan_cycles = st.total_cycles;
        Ok::<_, MokeyError>((st, out))
    })?;

    let mut merged = SimStats::default();
    let mut results = vec![None; m * n];
    for (st, out) in per_tile {
        merged.add(&st);
        merged.makespan_cycles = merged.makespan_cycles.max(st.makespan_cycles);
        for (idx, r) in out {
            results[idx] = Some(r);
        }
    }
    Ok((merged, results.into_iter().map(|r| r.expect("every output assigned to a tile")).collect()))
}

pub const CSV_HEADER: &str = "total_cycles,stream_cycles,outlier_stall_cycles,postproc_cycles,drain_events,bytes_moved";

pub fn report_csv(st: &SimStats) -> String {
    format!(
        "{CSV_HEADER}\n{},{},{},{},{},{}\n",
        st.total_cycles, st.stream_cycles, st.outlier_stall_cycles, st.postproc_cycles, st.drain_events, st.bytes_moved
    )
}

pub fn report_text(st: &SimStats) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 12] = [
        ("total cycles", st.total_cycles.to_string()),
        ("makespan cycles", st.makespan_cycles.to_string()),
        ("stream cycles", st.stream_cycles.to_string()),
        ("outlier stall cycles", st.outlier_stall_cycles.to_string()),
        ("drain cycles", st.drain_cycles.to_string()),
        ("post-processing cycles", st.postproc_cycles.to_string()),
        ("drain events", st.drain_events.to_string()),
        ("gaussian pairs", st.gaussian_pairs.to_string()),
        ("outlier pairs", st.outlier_pairs.to_string()),
        ("gpe utilization", format!("{:.4}", st.gpe_utilization())),
        ("bytes moved", st.bytes_moved.to_string()),
        ("gpe slots", st.gpe_slots.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<24}{v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::dot;
    use crate::golden::ExpFit;

    fn dict() -> TensorDictionary {
        TensorDictionary::from_parts(1.0, 0.1, ExpFit { a: 1.179, b: -0.977, max_int: 7 }, &[8, 9], &[8]).unwrap()
    }

    #[test]
    fn leading_one_examples() {
        assert_eq!(schedule_outliers(0), (None, 0));
        assert_eq!(schedule_outliers(0b0010_0100), (Some(2), 0b0010_0000));
        assert_eq!(outlier_service_order(0xff), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn outlier_free_stream_runs_at_peak() {
        let d = dict();
        let k = EngineConstants::for_length(&d, &d, 100).unwrap();
        let a: Vec<Code> = (0..100).map(|i| Code::gaussian(i % 2 == 0, (i % 8) as u8)).collect();
        let (st, r) = simulate_dot_stream(&a, &a, &d, &d, &k, &TileConfig::default()).unwrap();
        assert_eq!(st.stream_cycles, 13);
        assert_eq!(st.outlier_stall_cycles, 0);
        assert_eq!(st.total_cycles, 13 + 8 * 32 + 1);
        assert_eq!(r, dot(&a, &a, &d, &d, &k).unwrap());
    }

    #[test]
    fn same_cycle_outliers_stall() {
        let d = dict();
        let k = EngineConstants::for_length(&d, &d, 16).unwrap();
        let mut a = vec![Code::gaussian(false, 1); 16];
        let w = a.clone();
        a[2] = Code::outlier(false, 0);
        a[5] = Code::outlier(true, 0);
        let (st, _) = simulate_dot_stream(&a, &w, &d, &d, &k, &TileConfig::default()).unwrap();
        assert_eq!(st.outlier_stall_cycles, 1);
        a[5] = Code::gaussian(false, 1);
        a[12] = Code::outlier(false, 1);
        let (st, _) = simulate_dot_stream(&a, &w, &d, &d, &k, &TileConfig::default()).unwrap();
        assert_eq!(st.outlier_stall_cycles, 0);
        assert_eq!(st.outlier_pairs, 2);
    }

    #[test]
    fn narrow_counters_drain_without_changing_values() {
        let d = dict();
        let n = 4096;
        let k = EngineConstants::for_length(&d, &d, n).unwrap();
        let a = vec![Code::gaussian(false, 3); n];
        let narrow = simulate_dot_stream(&a, &a, &d, &d, &k, &TileConfig::default()).unwrap();
        let wide =
            simulate_dot_stream(&a, &a, &d, &d, &k, &TileConfig { counter_bits: 32, ..Default::default() }).unwrap();
        // Each GPE sees 512 equal pairs; an 8-bit counter holds 127 of them.
        assert_eq!(narrow.0.drain_events, 8 * 4);
        assert_eq!(wide.0.drain_events, 0);
        assert_eq!(narrow.1, wide.1);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let csv = report_csv(&SimStats::default());
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 6);
    }
}
