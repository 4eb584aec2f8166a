use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn qmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmf")).args(args).output().expect("binary runs")
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn simulate_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = vec![];
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = tmp.path().join(name);
        let o = qmf(&[
            "simulate",
            "--N",
            "30",
            "--T",
            "0.1",
            "--seed",
            "5",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(snapshot(&out));
    }
    assert!(runs[0].contains_key("ensemble.csv"));
    assert!(runs[0].contains_key("ensemble.meta.json"));
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn seed_changes_the_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csvs = vec![];
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let o = qmf(&["simulate", "--N", "10", "--T", "0.05", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        csvs.push(std::fs::read(out.join("ensemble.csv")).unwrap());
    }
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn sidecar_records_hash_and_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = qmf(&["mkv", "--cells", "32", "--pde-t", "0.1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("order.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["file"], "order.csv");
    assert_eq!(meta["experiment"], "mkv");
    assert_eq!(meta["columns"], serde_json::json!(["t", "r", "psi"]));
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    let header = std::fs::read_to_string(out.join("order.csv")).unwrap();
    assert!(header.starts_with("t,r,psi\n"));
    let line: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(line["passed"], true);
}

#[test]
fn config_errors_name_the_field_and_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"sim": {"dt": -1.0}}"#).unwrap();
    let o = qmf(&["simulate", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sim.dt"));

    std::fs::write(&bad, r#"{"lln": {"Nz": [1]}}"#).unwrap();
    let o = qmf(&["lln", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lln"));

    let o = qmf(&["sanov", "--E", "12", "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sanov.E"));

    let o = qmf(&["validate", "--model", "lorenz"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model"));
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"sanov": {"E": 2, "F": 2, "trials": 3}, "seed": 4}"#).unwrap();
    let out = tmp.path().join("o");
    let o = qmf(&["sanov", "--config", cfg.to_str().unwrap(), "--trials", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("sanov.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 2);
}
