use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mokey(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mokey")).current_dir(dir).args(args).output().expect("spawn mokey")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mokey(dir, args);
    assert!(
        out.status.success(),
        "mokey {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_GOLDEN: [&str; 8] = ["--samples", "3000", "--repeats", "3", "--seed", "42", "gen-golden", "--out"];

fn golden(dir: &Path, name: &str) {
    let mut args = SMALL_GOLDEN.to_vec();
    args.push(name);
    ok(dir, &args);
}

/// Quantize a synthetic `rows x cols` matrix to `name.mkyc`.
fn quantized(dir: &Path, name: &str, shape: &str, std: &str, seed: &str) {
    let t = format!("{name}.mkyt");
    ok(dir, &["--seed", seed, "synth", "--shape", shape, "--std", std, "--out", &t]);
    ok(dir, &["quantize", &t, "--golden", "g.json", "--out", &format!("{name}.mkyc")]);
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let dir = TempDir::new().unwrap();
    let out = mokey(dir.path(), &[]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout) + String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "{text}");
    for sub in ["gen-golden", "quantize", "pack", "unpack", "matmul", "verify", "simulate", "eval"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn golden_file_regression() {
    let dir = TempDir::new().unwrap();
    golden(dir.path(), "g.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    let pinned = [
        0.1425831572205345,
        0.40314527464349104,
        0.6583128850466615,
        0.9401316575359875,
        1.2475217688118918,
        1.6115419719475041,
        2.0632688315364476,
        2.8720370811858085,
    ];
    let got: Vec<f64> = v["magnitudes"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(got.len(), pinned.len());
    for (g, p) in got.iter().zip(pinned) {
        assert!((g - p).abs() < 1e-12, "{g} vs {p}");
    }
    assert!((v["a"].as_f64().unwrap() - 1.203322605235042).abs() < 1e-9);
    assert!((v["b"].as_f64().unwrap() + 0.8322811923725592).abs() < 1e-9);
    assert_eq!(v["generation"]["seed"], 42);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    golden(dir.path(), "g.json");
    golden(dir.path(), "g2.json");
    ok(
        dir.path(),
        &["--sequential", "--samples", "3000", "--repeats", "3", "--seed", "42", "gen-golden", "--out", "g3.json"],
    );
    let g = fs::read(dir.path().join("g.json")).unwrap();
    assert_eq!(g, fs::read(dir.path().join("g2.json")).unwrap());
    assert_eq!(g, fs::read(dir.path().join("g3.json")).unwrap());

    quantized(dir.path(), "a", "40,70", "1.0", "5");
    quantized(dir.path(), "b", "40,70", "1.0", "5");
    for ext in ["mkyt", "mkyc", "mkyc.json"] {
        assert_eq!(
            fs::read(dir.path().join(format!("a.{ext}"))).unwrap(),
            fs::read(dir.path().join(format!("b.{ext}"))).unwrap(),
            "{ext} differs"
        );
    }
}

#[test]
fn missing_input_is_a_diagnosed_failure() {
    let dir = TempDir::new().unwrap();
    let out = mokey(dir.path(), &["pack", "does-not-exist.mkyc", "--out", "x.mkyp"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does-not-exist.mkyc"), "{err}");
    assert!(!dir.path().join("x.mkyp").exists());
}

#[test]
fn invalid_flags_are_rejected_up_front() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["--clusters", "5", "gen-golden", "--out", "g.json"],
        vec!["--group-size", "65", "gen-golden", "--out", "g.json"],
        vec!["--gpes", "0", "gen-golden", "--out", "g.json"],
        vec!["--tiles", "0", "gen-golden", "--out", "g.json"],
    ] {
        let out = mokey(dir.path(), &args);
        assert!(!out.status.success(), "{args:?} accepted");
        assert!(!out.stderr.is_empty());
        assert!(!dir.path().join("g.json").exists());
    }
}

#[test]
fn garbage_input_is_rejected() {
    let dir = TempDir::new().unwrap();
    golden(dir.path(), "g.json");
    fs::write(dir.path().join("junk.mkyt"), b"not a tensor").unwrap();
    let out = mokey(dir.path(), &["quantize", "junk.mkyt", "--golden", "g.json", "--out", "j.mkyc"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.mkyt"));
}

#[test]
fn full_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    golden(d, "g.json");
    quantized(d, "a", "12,150", "1.0", "1");
    quantized(d, "w", "150,9", "0.05", "2");

    // Packed round trip is lossless.
    ok(d, &["--group-size", "32", "pack", "a.mkyc", "--out", "a.mkyp"]);
    ok(d, &["unpack", "a.mkyp", "--out", "a2.mkyc"]);
    assert_eq!(fs::read(d.join("a.mkyc")).unwrap(), fs::read(d.join("a2.mkyc")).unwrap());

    let v = ok(d, &["verify", "--a", "a.mkyp", "--w", "w.mkyc"]);
    assert!(v.contains("0 mismatches"), "{v}");
    let v = ok(d, &["verify", "--a", "a.mkyc", "--w", "w.mkyc", "--out-frac", "13"]);
    assert!(v.contains("0 mismatches"), "{v}");

    ok(d, &["matmul", "--a", "a.mkyc", "--w", "w.mkyc", "--out", "y.mkyt", "--breakdown", "y.jsonl"]);
    let y = fs::read(d.join("y.mkyt")).unwrap();
    assert_eq!(&y[..4], b"MKYT");
    let lines: Vec<serde_json::Value> =
        fs::read_to_string(d.join("y.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 12 * 9);
    assert_eq!(lines[10]["row"], 1);
    assert_eq!(lines[10]["col"], 1);
    assert_eq!(lines[0]["terms"].as_array().unwrap().len(), 10);

    let csv = ok(d, &["--tiles", "3", "simulate", "--a", "a.mkyc", "--w", "w.mkyc"]);
    let mut rows = csv.lines();
    assert_eq!(
        rows.next().unwrap(),
        "total_cycles,stream_cycles,outlier_stall_cycles,postproc_cycles,drain_events,bytes_moved"
    );
    let vals: Vec<u64> = rows.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(vals.len(), 6);
    // 108 outputs, 150 pairs each over 8 GPEs.
    assert_eq!(vals[1], 108 * 19);
    assert!(vals[0] >= vals[1] + vals[2] + vals[3]);

    ok(d, &["eval", "a.mkyt", "a.mkyc", "--out", "e.jsonl"]);
    let e: serde_json::Value = serde_json::from_str(fs::read_to_string(d.join("e.jsonl")).unwrap().trim()).unwrap();
    let rmse = e["rmse"].as_f64().unwrap();
    assert!(rmse > 0.0 && rmse < 0.15, "{rmse}");
    assert!(e["bits_per_value"].as_f64().unwrap() >= 4.125);
}

#[test]
fn activation_profile_drives_the_dictionary() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    golden(d, "g.json");
    ok(d, &["--seed", "3", "synth", "--shape", "30,30", "--std", "2.0", "--out", "s1.mkyt"]);
    ok(d, &["--seed", "4", "synth", "--shape", "30,30", "--std", "2.0", "--out", "s2.mkyt"]);
    ok(d, &["--seed", "5", "synth", "--shape", "30,30", "--std", "2.0", "--out", "x.mkyt"]);
    ok(
        d,
        &[
            "quantize",
            "x.mkyt",
            "--golden",
            "g.json",
            "--profile",
            "s1.mkyt",
            "--profile",
            "s2.mkyt",
            "--out",
            "x.mkyc",
        ],
    );
    ok(d, &["quantize", "x.mkyt", "--golden", "g.json", "--out", "self.mkyc"]);
    let side =
        |f: &str| -> serde_json::Value { serde_json::from_str(&fs::read_to_string(d.join(f)).unwrap()).unwrap() };
    let (p, s) = (side("x.mkyc.json"), side("self.mkyc.json"));
    assert_ne!(p["dictionary"], s["dictionary"]);
}
