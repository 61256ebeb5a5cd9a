use std::path::Path;
use std::process::{Command, Output};

fn latcoh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latcoh"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn init_writes_a_loadable_config_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let first = latcoh(dir.path(), &["init", "--config", "run.toml"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let text = std::fs::read_to_string(dir.path().join("run.toml")).unwrap();
    assert!(text.contains("[lattice]") && text.contains("depth_u"));

    let again = latcoh(dir.path(), &["init", "--config", "run.toml"]);
    assert_eq!(again.status.code(), Some(2));

    let params = latcoh(dir.path(), &["params", "--config", "run.toml", "--out", "o"]);
    assert!(params.status.success());
}

#[test]
fn missing_config_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = latcoh(dir.path(), &["params", "--config", "absent.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("absent.toml") && err.contains("latcoh init"), "{err}");
}

#[test]
fn invalid_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[times]\ntof_ms = -1.0\n").unwrap();
    let out = latcoh(dir.path(), &["params", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), "[lattice]\ndepht_u = 10\n").unwrap();
    let out = latcoh(dir.path(), &["params", "--config", "typo.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let out = latcoh(dir.path(), &["params", "--depths", "5:x:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn depth_sweep_has_twenty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = latcoh(dir.path(), &["params", "--depths", "5:24:1", "--out", "o"]);
    assert!(out.status.success());
    let rows = data_rows(&dir.path().join("o/params.csv"));
    assert_eq!(rows.len(), 21);
    assert!(rows[1].starts_with("5,"));
    assert!(rows[20].starts_with("24,"));
}

#[test]
fn bloch_reports_the_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = latcoh(dir.path(), &["bloch", "--samples", "1", "--no-noise", "--out", "o"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Bloch period"), "{stdout}");
    assert!(dir.path().join("o/bloch.csv").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("file"), "").unwrap();
    let out = latcoh(dir.path(), &["params", "--out", "file/sub"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn fixed_seed_reproduces_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = |o: &'static str| {
        [
            "squeezing",
            "--samples",
            "8",
            "--depths",
            "10:14:4",
            "--seed",
            "5",
            "--out",
            o,
        ]
    };
    assert!(latcoh(dir.path(), &args("a")).status.success());
    assert!(latcoh(dir.path(), &args("b")).status.success());
    let a = std::fs::read(dir.path().join("a/squeezing.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/squeezing.csv")).unwrap();
    assert_eq!(a, b);
}
