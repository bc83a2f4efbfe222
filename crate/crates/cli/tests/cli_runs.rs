use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use svfield_cli::ResultRecord;
use tempfile::TempDir;

const MA_1D: &str = r#"
seed = 7

[model.z]
type = "moving-average"
alpha = 2.0
p_xi = 1.0
kernel = [{ offset = [0], value = 1.0 }, { offset = [1], value = 0.5 }]

[geometry]
shape = { kind = "unit-box", dim = 1 }
c_n = [2000.0]
t_n = [20]
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn svfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svfield")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    svfield(&args)
}

#[test]
fn simulate_writes_record_and_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ma.toml", MA_1D);
    let out = dir.path().join("out");
    let o = run("simulate", &cfg, &out, &["--reps", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let record = ResultRecord::load(&out.join("simulate.json")).unwrap();
    assert_eq!(record.experiment, "simulate");
    assert_eq!(record.config.plan.replications, 3);
    assert!(out.join(format!("simulate_{}.csv", record.table.name)).exists());
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", &MA_1D.replace("p_xi", "p_xii"));
    let o = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p_xii"));
}

#[test]
fn mismatched_experiment_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ma.toml", &format!("experiment = \"spectral\"\n{MA_1D}"));
    let o = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_turns_failed_checks_into_exit_three() {
    let dir = TempDir::new().unwrap();
    let text = format!("{MA_1D}\n[plan]\nquantile = 0.99\nwindows = 20000\ntv_max = 0.0\n");
    let cfg = write_config(&dir, "spectral.toml", &text);
    let lenient = run("spectral", &cfg, dir.path(), &[]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stdout).contains("FAIL"));
    let strict = run("spectral", &cfg, dir.path(), &["--strict"]);
    assert_eq!(strict.status.code(), Some(3));
    // the record is still written before the strict failure
    assert!(dir.path().join("spectral.json").exists());
}

#[test]
fn eta_theory_reports_closed_form_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ma.toml", MA_1D);
    let o = run("eta-theory", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let record = ResultRecord::load(&dir.path().join("eta-theory.json")).unwrap();
    let eta = record.table.column("eta").unwrap();
    assert!((eta[0].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn aligned_tiles_cover_a_box_exactly() {
    let dir = TempDir::new().unwrap();
    let text = r#"
[geometry]
shape = { kind = "unit-box", dim = 2 }
c_n = [100.0, 100.0]
t_n = [10, 10]
"#;
    let cfg = write_config(&dir, "geom.toml", text);
    let o = run("geometry-check", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let record = ResultRecord::load(&dir.path().join("geometry-check.json")).unwrap();
    let ratio = record.table.column("ratio").unwrap();
    assert_eq!(ratio, vec![&Value::from(0.0)]);
}

#[test]
fn report_merge_stacks_records_of_one_kind() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ma.toml", MA_1D);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("eta-theory", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run("eta-theory", &cfg, &b, &["--seed", "8"]).status.code(), Some(0));
    let merged = dir.path().join("merged");
    let o = svfield(&[
        "report-merge",
        a.join("eta-theory.json").to_str().unwrap(),
        b.join("eta-theory.json").to_str().unwrap(),
        "--out",
        merged.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let mut reader = csv::Reader::from_path(merged.join("eta-theory-merged.csv")).unwrap();
    assert_eq!(&reader.headers().unwrap()[0], "source");
    let sources: Vec<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(sources, ["0", "1"]);

    let geom = write_config(
        &dir,
        "geom.toml",
        "[geometry]\nshape = { kind = \"unit-box\", dim = 1 }\nc_n = [50.0]\nt_n = [5]\n",
    );
    assert_eq!(run("geometry-check", &geom, &a, &[]).status.code(), Some(0));
    let o = svfield(&[
        "report-merge",
        a.join("eta-theory.json").to_str().unwrap(),
        a.join("geometry-check.json").to_str().unwrap(),
        "--out",
        merged.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
