use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mokey_core::engine::gemm;
use mokey_core::exec::Exec;
use mokey_core::golden::{generate_golden_dictionary, ExpFit, GoldenConfig};
use mokey_core::pack::pack;
use mokey_core::quant::{build_tensor_dictionary, encode_values, TensorDictionary};
use mokey_core::tensor::TensorStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FIT: ExpFit = ExpFit { a: 1.179, b: -0.977, max_int: 7 };
const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn normal(seed: u64, n: usize, s: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dict(v: &[f64]) -> Arc<TensorDictionary> {
    let stats = TensorStats::from_values(v).unwrap();
    Arc::new(build_tensor_dictionary(&stats, &FIT, v, Exec::Sequential).unwrap())
}

fn bench_gemm(c: &mut Criterion) {
    let (m, k, n) = (64, 768, 64);
    let va = normal(1, m * k, 1.0);
    let vw = normal(2, k * n, 0.05);
    let qa = encode_values(vec![m, k], &va, dict(&va), Exec::Sequential).unwrap();
    let qw = encode_values(vec![k, n], &vw, dict(&vw), Exec::Sequential).unwrap();
    let mut g = c.benchmark_group("gemm_64x768x64");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| gemm(&qa, &qw, None, exec).unwrap()));
    }
    g.finish();
}

fn bench_encode(c: &mut Criterion) {
    let v = normal(3, 1 << 20, 1.0);
    let d = dict(&v);
    let mut g = c.benchmark_group("encode_1m");
    g.sample_size(20);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| encode_values(vec![v.len()], &v, d.clone(), exec).unwrap())
        });
    }
    g.finish();
}

fn bench_pack(c: &mut Criterion) {
    let v = normal(4, 1 << 20, 1.0);
    let q = encode_values(vec![v.len()], &v, dict(&v), Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("pack_1m");
    g.sample_size(20);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| pack(&q, 64, exec).unwrap()));
    }
    g.finish();
}

fn bench_golden(c: &mut Criterion) {
    let cfg = GoldenConfig { samples: 20_000, clusters: 16, repeats: 8, seed: 1 };
    let mut g = c.benchmark_group("golden_20k_x8");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_golden_dictionary(&cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_gemm, bench_encode, bench_pack, bench_golden);
criterion_main!(benches);
