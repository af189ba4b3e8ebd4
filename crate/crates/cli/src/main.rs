use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use mokey_core::engine::{default_output_format, gemm};
use mokey_core::exec::Exec;
use mokey_core::fixed::QFormat;
use mokey_core::golden::{fit_exponential, generate_golden_dictionary, GoldenConfig, GoldenFile};
use mokey_core::pack::{measure, pack, unpack_codes, PackedTensor, DEFAULT_GROUP_SIZE, MAX_GROUP_SIZE, PACK_MAGIC};
use mokey_core::quant::{
    build_tensor_dictionary, decode_tensor, encode_tensor, load_codes, profile_activations, save_codes,
    QuantizedTensor, Sidecar, CODES_MAGIC,
};
use mokey_core::reference::mac_gemm;
use mokey_core::sim::{report_csv, report_text, simulate_layer, TileConfig};
use mokey_core::tensor::{compute_stats, load_tensor, save_tensor, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "mokey", version, about = "Post-training 4-bit quantization with an integer dot-product engine")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Knobs shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// RNG seed for dictionary generation and synthetic tensors.
    #[arg(long, global = true, default_value_t = GoldenConfig::default().seed)]
    seed: u64,
    /// Normal samples drawn per repeat when clustering.
    #[arg(long, global = true, default_value_t = GoldenConfig::default().samples)]
    samples: usize,
    /// Independent clustering repeats averaged into the dictionary.
    #[arg(long, global = true, default_value_t = GoldenConfig::default().repeats)]
    repeats: usize,
    /// Cluster count (even; half per sign).
    #[arg(long, global = true, default_value_t = GoldenConfig::default().clusters)]
    clusters: usize,
    /// Per-counter width in the simulated tile.
    #[arg(long = "counter-bits", global = true, default_value_t = TileConfig::default().counter_bits)]
    counter_bits: u32,
    /// Gaussian processing elements per tile.
    #[arg(long, global = true, default_value_t = TileConfig::default().gpe_count)]
    gpes: usize,
    /// Elements per outlier-table group in packed files.
    #[arg(long = "group-size", global = true, default_value_t = DEFAULT_GROUP_SIZE)]
    group_size: usize,
    /// Tiles the simulated layer is spread across.
    #[arg(long, global = true, default_value_t = 1)]
    tiles: usize,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Cluster normal samples and fit the exponential curve; writes a golden JSON file.
    GenGolden {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a random normal f32 tensor.
    Synth {
        /// Comma-separated dimensions, e.g. 64,128.
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        mean: f64,
        #[arg(long, default_value_t = 1.0)]
        std: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize a tensor to 4-bit codes plus a sidecar dictionary.
    Quantize {
        input: PathBuf,
        #[arg(long)]
        golden: PathBuf,
        /// Fit the dictionary to these activation samples instead of the input.
        #[arg(long = "profile")]
        profile: Vec<PathBuf>,
        /// Codes file; the sidecar is written to OUT.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pack codes into the value-area / outlier-table layout.
    Pack {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand a packed file back into a codes file.
    Unpack {
        input: PathBuf,
        /// Sidecar describing the tensor (defaults to INPUT.json).
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiply two quantized matrices on the integer engine.
    Matmul {
        #[command(flatten)]
        ops: Operands,
        /// Fractional bits of the 16-bit output (default: sized to the operands).
        #[arg(long = "out-frac")]
        out_frac: Option<u32>,
        /// Fixed-point output tensor.
        #[arg(long)]
        out: PathBuf,
        /// Per-element term breakdown as JSON lines.
        #[arg(long)]
        breakdown: Option<PathBuf>,
    },
    /// Compare the engine against a direct decode-and-multiply reference.
    Verify {
        #[command(flatten)]
        ops: Operands,
        #[arg(long = "out-frac")]
        out_frac: Option<u32>,
    },
    /// Cycle-level model of a tile running the layer.
    Simulate {
        #[command(flatten)]
        ops: Operands,
        /// CSV stats (printed to stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quality and size of a quantized tensor against its original.
    Eval {
        original: PathBuf,
        quantized: PathBuf,
        /// Also append the report as a JSON line here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Operands {
    /// Left operand (codes or packed file with a sidecar).
    #[arg(long = "a")]
    a: PathBuf,
    /// Right operand.
    #[arg(long = "w")]
    w: PathBuf,
}

/// Validated settings derived from the shared flags.
#[derive(Debug, Clone)]
struct RunConfig {
    golden: GoldenConfig,
    tile: TileConfig,
    group_size: usize,
    tiles: usize,
    exec: Exec,
}

impl RunConfig {
    fn from_args(r: &RunArgs) -> Result<Self> {
        let golden = GoldenConfig { samples: r.samples, clusters: r.clusters, repeats: r.repeats, seed: r.seed };
        ensure!(golden.samples >= golden.clusters, "--samples {} is below --clusters {}", r.samples, r.clusters);
        ensure!(golden.repeats >= 1, "--repeats must be at least 1");
        ensure!(
            golden.clusters >= 2 && golden.clusters % 2 == 0,
            "--clusters {} must be even and at least 2",
            r.clusters
        );
        let tile = TileConfig { gpe_count: r.gpes, counter_bits: r.counter_bits, ..TileConfig::default() };
        tile.validate().context("invalid tile configuration")?;
        ensure!(
            (1..=MAX_GROUP_SIZE).contains(&r.group_size),
            "--group-size {} must be in 1..={MAX_GROUP_SIZE}",
            r.group_size
        );
        ensure!(r.tiles >= 1, "--tiles must be at least 1");
        let exec = if r.sequential { Exec::Sequential } else { Exec::default() };
        Ok(Self { golden, tile, group_size: r.group_size, tiles: r.tiles, exec })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::FAILURE
        }
    }
}

/// Join the cause chain, dropping causes a wrapper already printed.
fn chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out += ": ";
            }
            out += &msg;
        }
        last = msg;
    }
    out
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::from_args(&cli.run)?;
    check_inputs(&cli.cmd)?;
    match cli.cmd {
        Cmd::GenGolden { out } => gen_golden(&cfg, &out),
        Cmd::Synth { shape, mean, std, out } => synth(&cfg, shape, mean, std, &out),
        Cmd::Quantize { input, golden, profile, out } => quantize(&cfg, &input, &golden, &profile, &out),
        Cmd::Pack { input, out } => pack_cmd(&cfg, &input, &out),
        Cmd::Unpack { input, sidecar, out } => unpack_cmd(&input, sidecar, &out),
        Cmd::Matmul { ops, out_frac, out, breakdown } => matmul(&cfg, &ops, out_frac, &out, breakdown.as_deref()),
        Cmd::Verify { ops, out_frac } => verify(&cfg, &ops, out_frac),
        Cmd::Simulate { ops, out } => simulate(&cfg, &ops, out.as_deref()),
        Cmd::Eval { original, quantized, out } => eval(&cfg, &original, &quantized, out.as_deref()),
    }
}

/// Fail before any work if an input path is missing.
fn check_inputs(cmd: &Cmd) -> Result<()> {
    let inputs: Vec<&Path> = match cmd {
        Cmd::GenGolden { .. } | Cmd::Synth { .. } => vec![],
        Cmd::Quantize { input, golden, profile, .. } => {
            let mut v = vec![input.as_path(), golden.as_path()];
            v.extend(profile.iter().map(PathBuf::as_path));
            v
        }
        Cmd::Pack { input, .. } | Cmd::Unpack { input, .. } => vec![input],
        Cmd::Matmul { ops, .. } | Cmd::Verify { ops, .. } | Cmd::Simulate { ops, .. } => vec![&ops.a, &ops.w],
        Cmd::Eval { original, quantized, .. } => vec![original, quantized],
    };
    for p in inputs {
        ensure!(p.is_file(), "input file {} does not exist", p.display());
    }
    Ok(())
}

/// `x.mkyc` -> `x.mkyc.json`, so codes and packed files never share a sidecar.
fn sidecar_path(codes: &Path) -> PathBuf {
    let mut s = codes.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Load a codes or packed file together with its sidecar.
fn load_quantized(path: &Path) -> Result<QuantizedTensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sc_path = sidecar_path(path);
    let sc = Sidecar::load(&sc_path).with_context(|| format!("reading sidecar {}", sc_path.display()))?;
    let codes = if bytes.starts_with(&PACK_MAGIC) {
        let p = PackedTensor::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        unpack_codes(&p)?
    } else if bytes.starts_with(&CODES_MAGIC) {
        let (shape, codes) = load_codes(path)?;
        ensure!(shape == sc.shape, "{}: shape {:?} disagrees with sidecar {:?}", path.display(), shape, sc.shape);
        codes
    } else {
        bail!("{}: not a codes or packed file", path.display());
    };
    sc.attach(codes).with_context(|| format!("binding {} to its sidecar", path.display()))
}

fn gen_golden(cfg: &RunConfig, out: &Path) -> Result<ExitCode> {
    let gd = generate_golden_dictionary(&cfg.golden, cfg.exec)?;
    let fit = fit_exponential(&gd)?;
    GoldenFile::new(&gd, &fit, cfg.golden).save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("golden dictionary: {} magnitudes, a = {:.6}, b = {:.6}", gd.magnitudes.len(), fit.a, fit.b);
    Ok(ExitCode::SUCCESS)
}

fn synth(cfg: &RunConfig, shape: Vec<usize>, mean: f64, std: f64, out: &Path) -> Result<ExitCode> {
    ensure!(std.is_finite() && std >= 0.0 && mean.is_finite(), "--mean/--std must be finite, --std non-negative");
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.golden.seed);
    let data = (0..n).map(|_| (mean + std * rng.sample::<f64, _>(StandardNormal)) as f32).collect();
    save_tensor(&Tensor::from_f32(shape, data)?, out)?;
    Ok(ExitCode::SUCCESS)
}

fn quantize(cfg: &RunConfig, input: &Path, golden: &Path, profile: &[PathBuf], out: &Path) -> Result<ExitCode> {
    let t = load_tensor(input).with_context(|| format!("reading {}", input.display()))?;
    let fit = GoldenFile::load(golden).with_context(|| format!("reading {}", golden.display()))?.fit();
    let dict = if profile.is_empty() {
        build_tensor_dictionary(&compute_stats(&t)?, &fit, &t.to_f64_vec(), cfg.exec)?
    } else {
        let samples = profile.iter().map(load_tensor).collect::<mokey_core::error::Result<Vec<_>>>()?;
        profile_activations(&samples, &fit, cfg.exec)?
    };
    let q = encode_tensor(&t, Arc::new(dict), cfg.exec)?;
    save_codes(&q, out)?;
    Sidecar::of(&q).save(sidecar_path(out))?;
    println!(
        "quantized {} values, {} outliers ({:.3}%), format Q{}.{}",
        q.len(),
        q.outlier_count(),
        100.0 * q.outlier_fraction(),
        q.dict().qformat.total_bits - q.dict().qformat.frac,
        q.dict().qformat.frac
    );
    Ok(ExitCode::SUCCESS)
}

fn pack_cmd(cfg: &RunConfig, input: &Path, out: &Path) -> Result<ExitCode> {
    let q = load_quantized(input)?;
    let p = pack(&q, cfg.group_size, cfg.exec)?;
    p.save(out)?;
    if sidecar_path(input) != sidecar_path(out) {
        fs::copy(sidecar_path(input), sidecar_path(out)).context("copying sidecar")?;
    }
    let m = measure(&p)?;
    println!(
        "{:.4} bits/value, {} payload bytes, {:.2}x vs f32",
        m.bits_per_value, m.payload_bytes, m.compression_vs_f32
    );
    Ok(ExitCode::SUCCESS)
}

fn unpack_cmd(input: &Path, sidecar: Option<PathBuf>, out: &Path) -> Result<ExitCode> {
    let sc_path = sidecar.unwrap_or_else(|| sidecar_path(input));
    let sc = Sidecar::load(&sc_path).with_context(|| format!("reading sidecar {}", sc_path.display()))?;
    let p = PackedTensor::load(input).with_context(|| format!("reading {}", input.display()))?;
    let q = sc.attach(unpack_codes(&p)?)?;
    save_codes(&q, out)?;
    sc.save(sidecar_path(out))?;
    Ok(ExitCode::SUCCESS)
}

fn operands(ops: &Operands) -> Result<(QuantizedTensor, QuantizedTensor)> {
    let (a, w) = (load_quantized(&ops.a)?, load_quantized(&ops.w)?);
    ensure!(a.shape().len() == 2 && w.shape().len() == 2, "operands must be matrices");
    ensure!(a.shape()[1] == w.shape()[0], "inner dimensions differ: {:?} x {:?}", a.shape(), w.shape());
    Ok((a, w))
}

fn output_format(a: &QuantizedTensor, w: &QuantizedTensor, frac: Option<u32>) -> Result<QFormat> {
    Ok(match frac {
        Some(f) => QFormat::q16(f)?,
        None => default_output_format(a.dict(), w.dict(), a.shape()[1])?,
    })
}

#[derive(Serialize)]
struct BreakdownLine {
    row: usize,
    col: usize,
    raw: i64,
    value: f64,
    saturated: bool,
    gaussian_pairs: u64,
    exact_frac: u32,
    terms: Vec<(&'static str, String)>,
}

fn matmul(
    cfg: &RunConfig,
    ops: &Operands,
    frac: Option<u32>,
    out: &Path,
    breakdown: Option<&Path>,
) -> Result<ExitCode> {
    let (a, w) = operands(ops)?;
    let fmt = output_format(&a, &w, frac)?;
    let g = gemm(&a, &w, Some(fmt), cfg.exec)?;
    save_tensor(&g.to_tensor()?, out)?;
    if let Some(path) = breakdown {
        let mut s = String::new();
        for (i, r) in g.results.iter().enumerate() {
            let line = BreakdownLine {
                row: i / g.cols,
                col: i % g.cols,
                raw: r.value,
                value: r.to_f64(),
                saturated: r.saturated,
                gaussian_pairs: r.n_gauss,
                exact_frac: r.exact_frac,
                terms: r.breakdown.terms().iter().map(|(n, v)| (*n, v.to_string())).collect(),
            };
            s += &serde_json::to_string(&line)?;
            s.push('\n');
        }
        fs::write(path, s)?;
    }
    println!(
        "{}x{} output in Q{}.{}, {} saturated",
        g.rows,
        g.cols,
        fmt.total_bits - fmt.frac,
        fmt.frac,
        g.saturated()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(cfg: &RunConfig, ops: &Operands, frac: Option<u32>) -> Result<ExitCode> {
    let (a, w) = operands(ops)?;
    let fmt = output_format(&a, &w, frac)?;
    let g = gemm(&a, &w, Some(fmt), cfg.exec)?;
    let reference = mac_gemm(&a, &w, fmt, cfg.exec)?;
    let diffs: Vec<u64> = g.results.iter().zip(&reference).map(|(r, &m)| r.value.abs_diff(m)).collect();
    let mismatches = diffs.iter().filter(|&&d| d != 0).count();
    let worst = diffs.iter().copied().max().unwrap_or(0);
    println!(
        "{} outputs, {mismatches} mismatches, max discrepancy {worst} ulp ({:e})",
        diffs.len(),
        worst as f64 * fmt.ulp()
    );
    Ok(if mismatches == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn simulate(cfg: &RunConfig, ops: &Operands, out: Option<&Path>) -> Result<ExitCode> {
    let (a, w) = operands(ops)?;
    let fmt = default_output_format(a.dict(), w.dict(), a.shape()[1])?;
    let (st, _) = simulate_layer(&a, &w, &cfg.tile, cfg.tiles, fmt, cfg.exec)?;
    match out {
        Some(p) => {
            fs::write(p, report_csv(&st))?;
            print!("{}", report_text(&st));
        }
        None => print!("{}", report_csv(&st)),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalReport {
    elements: usize,
    rmse: f64,
    max_abs_error: f64,
    outlier_fraction: f64,
    bits_per_value: f64,
    compression_vs_f32: f64,
}

fn eval(cfg: &RunConfig, original: &Path, quantized: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let t = load_tensor(original).with_context(|| format!("reading {}", original.display()))?;
    let q = load_quantized(quantized)?;
    ensure!(t.shape() == q.shape(), "shapes differ: {:?} vs {:?}", t.shape(), q.shape());
    let (x, y) = (t.to_f64_vec(), decode_tensor(&q)?.to_f64_vec());
    let sq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
    let max_abs_error = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let m = measure(&pack(&q, cfg.group_size, cfg.exec)?)?;
    let r = EvalReport {
        elements: x.len(),
        rmse: (sq / x.len().max(1) as f64).sqrt(),
        max_abs_error,
        outlier_fraction: q.outlier_fraction(),
        bits_per_value: m.bits_per_value,
        compression_vs_f32: m.compression_vs_f32,
    };
    println!(
        "rmse {:.6}, max abs error {:.6}, outliers {:.3}%, {:.4} bits/value ({:.2}x vs f32)",
        r.rmse,
        r.max_abs_error,
        100.0 * r.outlier_fraction,
        r.bits_per_value,
        r.compression_vs_f32
    );
    if let Some(p) = out {
        let mut s = fs::read_to_string(p).unwrap_or_default();
        s += &serde_json::to_string(&r)?;
        s.push('\n');
        fs::write(p, s)?;
    }
    Ok(ExitCode::SUCCESS)
}
