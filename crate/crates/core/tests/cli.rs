use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{"test_size": 6,
  "strategies": ["model_based", "supervised", "tta_domain"],
  "train": {"max_steps": 4, "validate_every": 2, "val_size": 8},
  "fit": {"steps": 10}, "adapt": {"steps": 2, "epochs": 1},
  "sweeps": [{"parameter": "epsilon", "grid": [-5, 5], "n_per_value": 2}]}"#;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrs-workbench"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(bin(d, &["--config", "absent.json", "evaluate"]).status.code(), Some(2));
    write(d, "typo.json", r#"{"test_sise": 3}"#);
    assert_eq!(bin(d, &["--config", "typo.json", "evaluate"]).status.code(), Some(2));
    write(d, "dup.json", r#"{"strategies": ["supervised", "supervised"]}"#);
    assert_eq!(bin(d, &["--config", "dup.json", "evaluate"]).status.code(), Some(2));
    assert_eq!(bin(d, &["--preset", "huge", "evaluate"]).status.code(), Some(2));
    assert_eq!(bin(d, &["report", "--records", "none.csv"]).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"test_size": 2, "fit": {"steps": 20, "lr": 1e200}}"#);
    let out = bin(dir.path(), &["--config", "c.json", "fit"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn datasets_are_tied_to_their_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.json", TINY);
    assert!(bin(d, &["--config", "c.json", "--out", "o", "simulate", "--n", "3"]).status.success());
    let ds = "o/dataset_full_range.jsonl";
    let ok = bin(d, &["--config", "c.json", "--out", "o", "fit", "--dataset", ds]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    write(d, "k1.json", r#"{"baseline_order": 1}"#);
    let bad = bin(d, &["--config", "k1.json", "--out", "o", "fit", "--dataset", ds]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn evaluate_sweep_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.json", TINY);
    let out = bin(d, &["--config", "c.json", "--seed", "5", "--out", "o", "evaluate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["records.csv", "summary.csv", "timing.csv", "run.json"] {
        assert!(d.join("o").join(f).exists(), "{f}");
    }
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("o/run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["seed"], 5);

    let summary = std::fs::read_to_string(d.join("o/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 3);
    std::fs::remove_file(d.join("o/summary.csv")).unwrap();
    assert!(bin(d, &["--out", "o", "report"]).status.success());
    assert_eq!(std::fs::read_to_string(d.join("o/summary.csv")).unwrap(), summary);

    assert!(bin(d, &["--config", "c.json", "--seed", "5", "--out", "o", "sweep"]).status.success());
    let curves = std::fs::read_to_string(d.join("o/sweep_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 3 * 2);
    assert!(bin(d, &["--out", "o", "report", "--records", "o/sweep_records.csv"]).status.success());
    assert_eq!(std::fs::read_to_string(d.join("o/sweep_curves.csv")).unwrap(), curves);
}

#[test]
fn tampered_records_are_rejected_by_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.json", TINY);
    assert!(bin(d, &["--config", "c.json", "--out", "o", "fit"]).status.success());
    let text = std::fs::read_to_string(d.join("o/fit_records.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let mae = header.iter().position(|h| *h == "mae").unwrap();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[mae] = "0.0".into();
    lines[1] = cells.join(",");
    std::fs::write(d.join("o/fit_records.csv"), lines.join("\n")).unwrap();
    let out = bin(d, &["report", "--records", "o/fit_records.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
