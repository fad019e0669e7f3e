use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dclr_core::io::load_embeddings;
use dclr_core::EmbeddingFormat;

fn dclr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dclr"))
        .args(args)
        .env_remove("DCLR_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dclr(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Data {
    emb: PathBuf,
    reference: PathBuf,
    pairs: PathBuf,
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> Data {
    let prefix = dir.join(name);
    let mut args = vec!["synth", "--out-prefix", p(&prefix)];
    args.extend_from_slice(extra);
    for (flag, value) in [("--n", "300"), ("--d", "24"), ("--pairs", "100")] {
        if !extra.contains(&flag) {
            args.extend([flag, value]);
        }
    }
    ok(&args);
    let file = |s: &str| dir.join(format!("{name}{s}"));
    Data {
        emb: file(".emb"),
        reference: file(".ref.emb"),
        pairs: file(".pairs.tsv"),
    }
}

fn train(data: &Data, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "train",
        "--embeddings",
        p(&data.emb),
        "--reference-embeddings",
        p(&data.reference),
        "--dev",
        p(&data.pairs),
        "--out",
        p(out),
        "--max-steps",
        "30",
        "--eval-every",
        "10",
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

fn last_number(s: &str) -> f64 {
    s.split_whitespace()
        .filter_map(|w| w.parse().ok())
        .next_back()
        .unwrap()
}

fn audit_field(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("{key} missing from {stdout}"))
}

#[test]
fn eval_of_best_checkpoint_matches_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &["--seed", "1"]);
    let out = dir.path().join("run");
    train(&data, &out, &["--seed", "5"]);
    let ckpt = out.join("best.ckpt");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("best.ckpt.json")).unwrap()).unwrap();
    let stdout = ok(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--embeddings",
        p(&data.emb),
        "--pairs",
        p(&data.pairs),
    ]);
    let rho = last_number(&stdout);
    assert!(
        (rho - meta["dev_metric"].as_f64().unwrap()).abs() < 1e-12,
        "{stdout}"
    );
}

#[test]
fn eval_without_checkpoint_scores_raw_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "raw", &["--seed", "2"]);
    let preds = dir.path().join("preds.tsv");
    let stdout = ok(&[
        "eval",
        "--embeddings",
        p(&data.emb),
        "--pairs",
        p(&data.pairs),
        "--predictions",
        p(&preds),
    ]);
    let emb = load_embeddings(&data.emb, EmbeddingFormat::Binary).unwrap();
    let text = fs::read_to_string(&data.pairs).unwrap();
    let mut pred = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let (i, j): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let (a, b) = (emb.row(i), emb.row(j));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        pred.push(dot / (na * nb));
    }
    let written: Vec<f64> = fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .skip(1)
        .map(last_number)
        .collect();
    assert_eq!(written.len(), pred.len());
    for (w, c) in written.iter().zip(&pred) {
        assert!((w - c).abs() < 1e-9);
    }
    let rho = last_number(&stdout);
    assert!(rho > 0.0 && rho <= 1.0);
}

#[test]
fn dimension_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", &[]);
    let b = synth(dir.path(), "b", &["--d", "16"]);
    let out = dir.path().join("run");
    let res = dclr(&[
        "train",
        "--embeddings",
        p(&a.emb),
        "--reference-embeddings",
        p(&b.reference),
        "--dev",
        p(&a.pairs),
        "--out",
        p(&out),
        "--max-steps",
        "5",
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("error:"));
    assert!(!out.join("best.ckpt").exists());
}

#[test]
fn missing_file_fails() {
    let res = dclr(&[
        "eval",
        "--embeddings",
        "/nonexistent/x.emb",
        "--pairs",
        "/nonexistent/p.tsv",
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("x.emb"));
}

#[test]
fn invalid_flags_fail_before_writing_anything() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &[]);
    let out = dir.path().join("run");
    let res = dclr(&[
        "train",
        "--embeddings",
        p(&data.emb),
        "--reference-embeddings",
        p(&data.reference),
        "--dev",
        p(&data.pairs),
        "--out",
        p(&out),
        "--tau",
        "0",
        "--dropout",
        "1.5",
        "--k=-1",
    ]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert_eq!(
        stderr.lines().filter(|l| l.starts_with("error:")).count(),
        3,
        "{stderr}"
    );
    assert!(!out.exists());
}

#[test]
fn audit_needs_two_sentences() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.tsv");
    fs::write(&one, "0.1\t0.2\t0.3\n").unwrap();
    let res = dclr(&[
        "audit",
        "--embeddings",
        p(&one),
        "--out",
        p(&dir.path().join("h.tsv")),
    ]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(
        stderr.starts_with("error:") && !stderr.contains("Usage"),
        "{stderr}"
    );
}

#[test]
fn audit_separates_narrow_cones_from_isotropic_data() {
    let dir = tempfile::tempdir().unwrap();
    let narrow = synth(dir.path(), "narrow", &["--half-angle", "15", "--d", "64"]);
    let iso = synth(
        dir.path(),
        "iso",
        &["--half-angle", "90", "--clusters", "300", "--d", "64"],
    );
    let hist = dir.path().join("hist.tsv");
    let s = ok(&["audit", "--embeddings", p(&narrow.emb), "--out", p(&hist)]);
    assert!(audit_field(&s, "fraction_high") > 0.8, "{s}");
    assert!(fs::read_to_string(&hist).unwrap().lines().count() > 1);
    let s = ok(&["audit", "--embeddings", p(&iso.emb), "--out", p(&hist)]);
    let (f, base) = (
        audit_field(&s, "fraction_high"),
        audit_field(&s, "sphere_baseline"),
    );
    assert!((f - base).abs() < 0.01, "{s}");
}

#[test]
fn phi_sweep_has_one_row_per_value_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &["--seed", "3"]);
    let table = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "sweep",
            "--embeddings",
            p(&data.emb),
            "--reference-embeddings",
            p(&data.reference),
            "--dev",
            p(&data.pairs),
            "--param",
            "phi",
            "--values",
            "0.7,0.8,0.9,off",
            "--out",
            p(&out),
            "--max-steps",
            "20",
            "--eval-every",
            "10",
        ]);
        fs::read_to_string(out).unwrap()
    };
    let first = table("sweep-a.tsv");
    assert_eq!(first.lines().count(), 5, "{first}");
    assert_eq!(first, table("sweep-b.tsv"));
}

#[test]
fn k_zero_in_a_sweep_equals_training_without_noise() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &["--seed", "4"]);
    let table = dir.path().join("k.tsv");
    ok(&[
        "sweep",
        "--embeddings",
        p(&data.emb),
        "--reference-embeddings",
        p(&data.reference),
        "--dev",
        p(&data.pairs),
        "--param",
        "k",
        "--values",
        "0,1",
        "--out",
        p(&table),
        "--max-steps",
        "30",
        "--eval-every",
        "10",
        "--seed",
        "6",
    ]);
    let text = fs::read_to_string(&table).unwrap();
    let k0: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    let stdout = train(
        &data,
        &dir.path().join("plain"),
        &["--seed", "6", "--no-noise"],
    );
    let rho: f64 = stdout.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert_eq!(k0[1].parse::<f64>().unwrap(), rho, "{text} vs {stdout}");
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", &["--seed", "8"]);
    let b = synth(dir.path(), "b", &["--seed", "8"]);
    let c = synth(dir.path(), "c", &["--seed", "9"]);
    for (x, y) in [
        (&a.emb, &b.emb),
        (&a.reference, &b.reference),
        (&a.pairs, &b.pairs),
    ] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    assert_ne!(fs::read(&a.emb).unwrap(), fs::read(&c.emb).unwrap());
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &[]);
    let run = |name: &str, seed: &str, env: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dclr"));
        cmd.args([
            "train",
            "--embeddings",
            p(&data.emb),
            "--reference-embeddings",
            p(&data.reference),
            "--dev",
            p(&data.pairs),
            "--out",
            p(&out),
            "--max-steps",
            "10",
            "--eval-every",
            "5",
            "--seed",
            seed,
        ]);
        cmd.env_remove("DCLR_SEED");
        if let Some(v) = env {
            cmd.env("DCLR_SEED", v);
        }
        assert!(cmd.status().unwrap().success());
        fs::read(out.join("metrics.tsv")).unwrap()
    };
    let by_env = run("env", "1", Some("7"));
    assert_eq!(by_env, run("flag", "7", None));
    assert_ne!(by_env, run("other", "1", None));
}

#[test]
fn noise_debug_writes_loadable_banks() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &[]);
    let prefix = dir.path().join("bank");
    let log = ok(&[
        "noise-debug",
        "--embeddings",
        p(&data.emb),
        "--reference-embeddings",
        p(&data.reference),
        "--out-prefix",
        p(&prefix),
    ]);
    let before =
        load_embeddings(dir.path().join("bank.before.emb"), EmbeddingFormat::Binary).unwrap();
    let after =
        load_embeddings(dir.path().join("bank.after.emb"), EmbeddingFormat::Binary).unwrap();
    assert_eq!((before.n(), before.d()), (after.n(), after.d()));
    assert_ne!(before.data(), after.data());
    // header plus iterations 0..=t
    assert_eq!(log.lines().count(), 1 + 5, "{log}");
}

#[test]
fn self_check_passes_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "a", &[]);
    let stdout = train(&data, &dir.path().join("run"), &["--self-check"]);
    assert!(stdout.contains("best dev spearman"), "{stdout}");
}
