use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kzm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kzm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KZM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

const CONFIG: &str = r#"
n_qubits = 5
seed = 4
shots = 500

[sweep]
tau_q = [0.5, 1.0, 2.0, 4.0, 8.0]
r_rule = { per_tau = 4.0 }
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn quench_fit_and_maxent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = kzm(
        &["quench", "--config", &cfg, "--out", "res.jsonl", "--workers", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("res.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(dir.path().join("res.jsonl.manifest.json").exists());

    // same config and seed: byte-identical records
    let again = kzm(&["quench", "--config", &cfg, "--out", "res2.jsonl"], dir.path());
    assert!(again.status.success());
    assert_eq!(text, fs::read_to_string(dir.path().join("res2.jsonl")).unwrap());
    let other = kzm(
        &["quench", "--config", &cfg, "--out", "res3.jsonl", "--seed", "5"],
        dir.path(),
    );
    assert!(other.status.success());
    assert_ne!(text, fs::read_to_string(dir.path().join("res3.jsonl")).unwrap());

    let fit = kzm(&["fit", "res.jsonl", "--window", "1", "8"], dir.path());
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(v["points_used"], 4);
    assert!(v["alpha"].as_f64().unwrap() > 0.0);

    let me = kzm(&["maxent", "res.jsonl", "--index", "1"], dir.path());
    assert!(me.status.success(), "{}", String::from_utf8_lossy(&me.stderr));
    let v: serde_json::Value = serde_json::from_slice(&me.stdout).unwrap();
    let pmf: Vec<f64> = serde_json::from_value(v[0]["pmf"].clone()).unwrap();
    assert_eq!(pmf.len(), 5);
    assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn output_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_qubits = 3\n");
    let sub = dir.path().join("outdir");
    fs::create_dir(&sub).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kzm"))
        .args(["quench", "--config", &cfg, "--out", "empty.jsonl"])
        .current_dir(dir.path())
        .env("KZM_OUTPUT_DIR", &sub)
        .output()
        .unwrap();
    assert!(out.status.success());
    // empty sweep: empty result file plus manifest
    assert_eq!(fs::read_to_string(sub.join("empty.jsonl")).unwrap(), "");
    assert!(sub.join("empty.jsonl.manifest.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "n_qubits = 40\n");
    assert_eq!(kzm(&["quench", "--config", &bad], dir.path()).status.code(), Some(2));
    assert_eq!(kzm(&["quench"], dir.path()).status.code(), Some(2));
    assert_eq!(kzm(&["no-such-command"], dir.path()).status.code(), Some(2));

    let cfg = write_config(dir.path(), CONFIG);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = kzm(
        &["quench", "--config", &cfg, "--out", "blocker/sub/res.jsonl"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));

    fs::write(dir.path().join("one.jsonl"), "").unwrap();
    assert_eq!(kzm(&["fit", "one.jsonl"], dir.path()).status.code(), Some(4));
}

#[test]
fn calibrate_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_qubits = 3\nseed = 2\n[noise]\nreadout = [0.02, 0.05]\n");
    let out = kzm(&["calibrate", "--config", &cfg, "--shots", "20000"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p01 = v["flip_rates"][0][0].as_f64().unwrap();
    assert!((p01 - 0.02).abs() < 0.005);

    let out = kzm(
        &["oracle", "--n-qubits", "4", "--tau-q", "1.0", "--r", "50"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["trotter"]["kappa1_error"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(
        kzm(&["oracle", "--n-qubits", "20", "--tau-q", "1.0"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = kzm(&["verify", "--criterion", "1", "--out", "report.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8_lossy(&out.stdout);
    assert!(line.starts_with("[PASS]  1 plateau value"), "{line}");
    assert!(dir.path().join("report.json").exists());
    assert_eq!(kzm(&["verify", "--criterion", "12"], dir.path()).status.code(), Some(2));
}
