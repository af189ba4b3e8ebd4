//! Golden Dictionary generation and the exponential curve fitted to it.
//!
//! The dictionary is built once, from standard-normal samples, by Ward
//! agglomerative clustering. In one dimension Ward's merge criterion
//!
//! ```text
//! cost(p, q) = n_p n_q / (n_p + n_q) * (c_p - c_q)^2
//! ```
//!
//! is always minimised by a pair of clusters adjacent in sorted order, so the
//! full hierarchy over sorted samples is computed with a heap over adjacent
//! pairs in `O(n log n)` instead of the textbook `O(n^3)` scan.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MokeyError, Result};
use crate::exec::Exec;

/// Largest curve index reachable by an outlier bin.
pub const MAX_OUTLIER_INT: u32 = 45;
/// Largest index of the Gaussian half-dictionary.
pub const MAX_GAUSS_INT: u32 = 7;

/// Positive half of a symmetric dictionary. The full dictionary is
/// `-magnitudes` (reversed) followed by `+magnitudes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenDictionary {
    pub magnitudes: Vec<f64>,
}

impl GoldenDictionary {
    pub fn new(magnitudes: Vec<f64>) -> Result<Self> {
        if magnitudes.is_empty() {
            return Err(MokeyError::Empty("golden dictionary magnitudes"));
        }
        if magnitudes[0] < 0.0 || magnitudes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MokeyError::InvalidArgument("magnitudes must be non-negative and strictly ascending".into()));
        }
        Ok(Self { magnitudes })
    }

    /// The full signed dictionary, ascending.
    pub fn centroids(&self) -> Vec<f64> {
        self.magnitudes.iter().rev().map(|m| -m).chain(self.magnitudes.iter().copied()).collect()
    }
}

/// `magnitude(int) = a^int + b` over `int in [0, max_int]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub max_int: u32,
}

#[derive(Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy)]
struct Cluster {
    sum: f64,
    count: usize,
    prev: Option<usize>,
    next: Option<usize>,
    version: u32,
}

impl Cluster {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

fn ward_cost(p: &Cluster, q: &Cluster) -> f64 {
    let (np, nq) = (p.count as f64, q.count as f64);
    let d = p.mean() - q.mean();
    np * nq / (np + nq) * d * d
}

/// Ward agglomerative clustering of scalar values down to `k` clusters.
///
/// Returns the cluster means in ascending order. Ties between equal merge
/// costs go to the leftmost pair.
pub fn agglomerative_cluster(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(MokeyError::InvalidArgument("k must be at least 1".into()));
    }
    if k > values.len() {
        return Err(MokeyError::InvalidArgument(format!("cannot form {k} clusters from {} values", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MokeyError::InvalidArgument("values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    // Clusters are named by the sorted position of their leftmost element.
    let mut clusters: Vec<Cluster> = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| Cluster {
            sum: v,
            count: 1,
            prev: i.checked_sub(1),
            next: (i + 1 < n).then_some(i + 1),
            version: 0,
        })
        .collect();

    let mut heap = BinaryHeap::with_capacity(n);
    for i in 0..n.saturating_sub(1) {
        heap.push(Reverse((Cost(ward_cost(&clusters[i], &clusters[i + 1])), i, 0u32, 0u32)));
    }

    let mut live = n;
    while live > k {
        let Reverse((_, left, lv, rv)) = heap.pop().expect("adjacent pairs remain while live > 1");
        let Some(right) = clusters[left].next else { continue };
        if clusters[left].version != lv || clusters[right].version != rv {
            continue;
        }
        let r = clusters[right];
        let l = &mut clusters[left];
        l.sum += r.sum;
        l.count += r.count;
        l.next = r.next;
        l.version += 1;
        clusters[right].version += 1;
        if let Some(nn) = r.next {
            clusters[nn].prev = Some(left);
        }
        live -= 1;

        if let Some(p) = clusters[left].prev {
            let c = ward_cost(&clusters[p], &clusters[left]);
            heap.push(Reverse((Cost(c), p, clusters[p].version, clusters[left].version)));
        }
        if let Some(nn) = clusters[left].next {
            let c = ward_cost(&clusters[left], &clusters[nn]);
            heap.push(Reverse((Cost(c), left, clusters[left].version, clusters[nn].version)));
        }
    }

    let mut means = Vec::with_capacity(k);
    let mut cur = Some(0);
    while let Some(i) = cur {
        means.push(clusters[i].mean());
        cur = clusters[i].next;
    }
    Ok(means)
}

/// Parameters of a Golden Dictionary run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenConfig {
    pub samples: usize,
    pub clusters: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for GoldenConfig {
    fn default() -> Self {
        Self { samples: 50_000, clusters: 16, repeats: 10, seed: 0x6d6f_6b65 }
    }
}

/// Standard-normal draw for one repeat; each repeat has its own ChaCha stream.
pub fn gaussian_samples(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Cluster `repeats` independent N(0,1) draws, average the sorted centroid
/// sets elementwise, and fold the result into its positive half.
pub fn generate_golden_dictionary(cfg: &GoldenConfig, exec: Exec) -> Result<GoldenDictionary> {
    if cfg.clusters < 2 || cfg.clusters % 2 != 0 {
        return Err(MokeyError::InvalidArgument(format!("cluster count {} must be even and at least 2", cfg.clusters)));
    }
    if cfg.samples < cfg.clusters {
        return Err(MokeyError::InvalidArgument(format!(
            "need at least {} samples, got {}",
            cfg.clusters, cfg.samples
        )));
    }
    if cfg.repeats == 0 {
        return Err(MokeyError::InvalidArgument("repeats must be at least 1".into()));
    }
    let runs = exec.try_map_range(cfg.repeats, |r| {
        agglomerative_cluster(&gaussian_samples(cfg.seed, r as u64, cfg.samples), cfg.clusters)
    })?;
    let mut mean = vec![0.0; cfg.clusters];
    for run in &runs {
        for (m, c) in mean.iter_mut().zip(run) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= cfg.repeats as f64);
    GoldenDictionary::new(symmetrize(&mean))
}

/// Average each positive centroid with the magnitude of its mirror.
pub fn symmetrize(sorted_centroids: &[f64]) -> Vec<f64> {
    let half = sorted_centroids.len() / 2;
    (0..half).map(|i| (sorted_centroids[half + i] - sorted_centroids[half - 1 - i]) / 2.0).collect()
}

/// Weighted squared residual of a curve against a half-dictionary, with
/// weight `2^(len-1-int)`: the outermost bin has unit weight.
pub fn weighted_residual(magnitudes: &[f64], a: f64, b: f64) -> f64 {
    let last = magnitudes.len() as i32 - 1;
    magnitudes
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let r = a.powi(k as i32) + b - y;
            2f64.powi(last - k as i32) * r * r
        })
        .sum()
}

/// Best offset for a fixed base: the weighted mean of `y - a^int`.
fn best_offset(magnitudes: &[f64], a: f64) -> f64 {
    let last = magnitudes.len() as i32 - 1;
    let (num, den) = magnitudes.iter().enumerate().fold((0.0, 0.0), |(n, d), (k, &y)| {
        let w = 2f64.powi(last - k as i32);
        (n + w * (y - a.powi(k as i32)), d + w)
    });
    num / den
}

const FIT_A_LO: f64 = 1.0;
const FIT_A_HI: f64 = 2.0;

/// Weighted least-squares fit of `a^int + b` to the half-dictionary.
///
/// `b` is solved in closed form for each candidate `a`; `a` is located with a
/// coarse scan over `(1, 2]` followed by golden-section refinement.
pub fn fit_exponential(gd: &GoldenDictionary) -> Result<ExpFit> {
    let y = &gd.magnitudes;
    if y.len() < 2 {
        return Err(MokeyError::InvalidArgument("need at least two magnitudes to fit".into()));
    }
    let profile = |a: f64| weighted_residual(y, a, best_offset(y, a));

    const SCAN: usize = 1000;
    let step = (FIT_A_HI - FIT_A_LO) / SCAN as f64;
    let best =
        (1..=SCAN).map(|i| FIT_A_LO + step * i as f64).min_by(|&p, &q| profile(p).total_cmp(&profile(q))).unwrap();

    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = ((best - step).max(FIT_A_LO + 1e-12), (best + step).min(FIT_A_HI));
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let (mut f1, mut f2) = (profile(x1), profile(x2));
    let mut iters = 0;
    while hi - lo > 1e-13 {
        iters += 1;
        if iters > 500 {
            let a = (lo + hi) / 2.0;
            return Err(MokeyError::FitNotConverged { residual: profile(a) });
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = profile(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = profile(x2);
        }
    }
    let a = (lo + hi) / 2.0;
    if a >= FIT_A_HI - 2.0 * step || a <= FIT_A_LO + 1e-9 {
        // The optimum sits on the search boundary, not in the interior.
        return Err(MokeyError::FitNotConverged { residual: profile(a) });
    }
    Ok(ExpFit { a, b: best_offset(y, a), max_int: y.len() as u32 - 1 })
}

/// `a^int + b`; the caller applies the sign.
pub fn eval_magnitude(fit: &ExpFit, int: u32) -> Result<f64> {
    if int > MAX_OUTLIER_INT {
        return Err(MokeyError::InvalidArgument(format!("curve index {int} beyond {MAX_OUTLIER_INT}")));
    }
    Ok(fit.a.powi(int as i32) + fit.b)
}

/// On-disk form of a generated dictionary: JSON text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFile {
    pub version: u32,
    pub magnitudes: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub max_int: u32,
    pub generation: GoldenConfig,
}

impl GoldenFile {
    pub const VERSION: u32 = 1;

    pub fn new(gd: &GoldenDictionary, fit: &ExpFit, generation: GoldenConfig) -> Self {
        Self {
            version: Self::VERSION,
            magnitudes: gd.magnitudes.clone(),
            a: fit.a,
            b: fit.b,
            max_int: fit.max_int,
            generation,
        }
    }

    pub fn fit(&self) -> ExpFit {
        ExpFit { a: self.a, b: self.b, max_int: self.max_int }
    }

    pub fn dictionary(&self) -> Result<GoldenDictionary> {
        GoldenDictionary::new(self.magnitudes.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        if f.version != Self::VERSION {
            return Err(MokeyError::UnsupportedVersion(f.version as u16));
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
