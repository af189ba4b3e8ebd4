mod common;

use std::sync::Arc;

use common::{random_codes, random_dict, NOMINAL_FIT};
use mokey_core::engine::{dot, gemm, EngineConstants};
use mokey_core::exec::Exec;
use mokey_core::quant::{Code, QuantizedTensor};
use mokey_core::sim::{simulate_dot_stream, simulate_layer, TileConfig, CRF_ENTRIES};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stall cycles from the definition: every cycle's outliers beyond the first.
fn expected_stalls(a: &[Code], w: &[Code], gpes: usize) -> u64 {
    a.chunks(gpes)
        .zip(w.chunks(gpes))
        .map(|(x, y)| {
            let c = x.iter().zip(y).filter(|(p, q)| p.is_outlier() || q.is_outlier()).count() as u64;
            c.saturating_sub(1)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn timing_laws(seed in any::<u64>(), n in 1usize..2000, p in 0.0f64..0.6, gpes in 1usize..=8, bits in 2u32..=32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (da, dw) = (random_dict(&mut rng, NOMINAL_FIT, true), random_dict(&mut rng, NOMINAL_FIT, true));
        let a = random_codes(&mut rng, &da, n, p);
        let w = random_codes(&mut rng, &dw, n, p);
        let k = EngineConstants::for_length(&da, &dw, n).unwrap();
        let cfg = TileConfig { gpe_count: gpes, counter_bits: bits, ..Default::default() };
        let (st, r) = simulate_dot_stream(&a, &w, &da, &dw, &k, &cfg).unwrap();
        prop_assert_eq!(r, dot(&a, &w, &da, &dw, &k).unwrap());
        prop_assert_eq!(st.stream_cycles, n.div_ceil(gpes) as u64);
        prop_assert_eq!(st.outlier_stall_cycles, expected_stalls(&a, &w, gpes));
        prop_assert_eq!(st.postproc_cycles, gpes as u64 * CRF_ENTRIES + 1);
        prop_assert_eq!(st.total_cycles, st.stream_cycles + st.outlier_stall_cycles + st.drain_cycles + st.postproc_cycles);
        let u = st.gpe_utilization();
        prop_assert!((0.0..=1.0).contains(&u));
        if bits == 32 {
            prop_assert_eq!(st.drain_events, 0);
        }
    }

    #[test]
    fn more_outliers_never_run_faster(seed in any::<u64>(), n in 1usize..800, flips in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dict(&mut rng, NOMINAL_FIT, true);
        let a = random_codes(&mut rng, &d, n, 0.05);
        let w = random_codes(&mut rng, &d, n, 0.0);
        let k = EngineConstants::for_length(&d, &d, n).unwrap();
        let cfg = TileConfig::default();
        let (base, _) = simulate_dot_stream(&a, &w, &d, &d, &k, &cfg).unwrap();
        let mut more = a.clone();
        let extra = random_codes(&mut rng, &d, flips, 1.0);
        for (i, c) in extra.into_iter().enumerate() {
            let at = (i * 7919 + seed as usize) % n;
            if !more[at].is_outlier() {
                more[at] = c;
            }
        }
        let (after, _) = simulate_dot_stream(&more, &w, &d, &d, &k, &cfg).unwrap();
        prop_assert!(after.total_cycles >= base.total_cycles);
    }
}

#[test]
fn layer_results_match_gemm_for_any_tile_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let da = random_dict(&mut rng, NOMINAL_FIT, true);
    let dw = random_dict(&mut rng, NOMINAL_FIT, true);
    let qa = QuantizedTensor::new(vec![6, 100], random_codes(&mut rng, &da, 600, 0.03), da).unwrap();
    let qw = QuantizedTensor::new(vec![100, 5], random_codes(&mut rng, &dw, 500, 0.01), dw).unwrap();
    let g = gemm(&qa, &qw, None, Exec::default()).unwrap();
    let mut single = None;
    for tiles in [1, 3, 30, 64] {
        let (st, res) = simulate_layer(&qa, &qw, &TileConfig::default(), tiles, g.out_fmt, Exec::default()).unwrap();
        assert_eq!(res, g.results);
        let single = *single.get_or_insert(st);
        assert_eq!(st.total_cycles, single.total_cycles);
        assert!(st.makespan_cycles <= single.makespan_cycles);
    }
}

#[test]
fn two_streams_double_the_bytes() {
    let d = Arc::new(mokey_core::quant::TensorDictionary::from_parts(1.0, 0.0, NOMINAL_FIT, &[], &[]).unwrap());
    let a = vec![Code::gaussian(false, 2); 128];
    let k = EngineConstants::for_length(&d, &d, 128).unwrap();
    let (st, _) = simulate_dot_stream(&a, &a, &d, &d, &k, &TileConfig::default()).unwrap();
    // 64 nibble bytes and two count bytes per operand, two output bytes.
    assert_eq!(st.bytes_moved, 2 * (64 + 2) + 2);
}
