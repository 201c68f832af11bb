use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rvio_sim::logs::read_sensor_logs;

const SHORT: &str = r#"{
  "scene": { "urban_strip": {} },
  "trajectory": { "kind": "constant_velocity", "duration": 6.0, "speed": 2.0 },
  "seed": 3
}"#;

fn rvio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvio"))
        .args(args)
        .output()
        .expect("run rvio")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn script() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scripts/recompute_metrics.py")
}

fn python_available() -> bool {
    Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.json", SHORT);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = rvio(&["run", "--config", arg(&cfg), "--out", arg(dir)]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "truth.csv",
        "estimate.csv",
        "errors.csv",
        "gates.csv",
        "metrics.csv",
    ] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty(), "{f} is empty");
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    let cfg_a = fs::read_to_string(a.join("config.json")).unwrap();
    let cfg_b = fs::read_to_string(b.join("config.json")).unwrap();
    assert_eq!(cfg_a.replace(arg(&a), ""), cfg_b.replace(arg(&b), ""));
    assert!(a.join("report.txt").exists());
    assert!(!a.join("divergence.json").exists());
    let logs = read_sensor_logs(&a.join("sensors")).unwrap();
    assert_eq!(logs.imu.len(), 6 * 250 + 1);
    assert!(!logs.frames.is_empty() && !logs.ranges.is_empty());
}

#[test]
fn recompute_script_agrees_with_logged_metrics() {
    if !python_available() {
        eprintln!("python3 not found; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.json", SHORT);
    let dir = tmp.path().join("run");
    assert_eq!(
        rvio(&["run", "--config", arg(&cfg), "--out", arg(&dir)])
            .status
            .code(),
        Some(0)
    );
    let out = Command::new("python3")
        .arg(script())
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn compare_runs_both_modes_on_identical_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "short.json", SHORT);
    let dir = tmp.path().join("cmp");
    let out = rvio(&["compare", "--config", arg(&cfg), "--out", arg(&dir)]);
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.join("comparison.csv")).unwrap();
    assert!(table.starts_with("name,vio,range_vio\n"));
    let sum = table
        .lines()
        .find(|l| l.starts_with("streams_sha256,"))
        .unwrap();
    let parts: Vec<&str> = sum.split(',').collect();
    assert_eq!(parts[1].len(), 64);
    assert_eq!(parts[1], parts[2]);
    let vio = fs::read_to_string(dir.join("vio/config.json")).unwrap();
    let rv = fs::read_to_string(dir.join("range_vio/config.json")).unwrap();
    assert!(vio.contains("\"mode\": \"vio\"") && rv.contains("\"mode\": \"range_vio\""));
    let gates = fs::read_to_string(dir.join("vio/gates.csv")).unwrap();
    assert!(gates.lines().count() > 1);
    assert!(gates
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("disabled")));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_config(tmp.path(), "typo.json", r#"{"sede": 4}"#);
    let out = rvio(&["run", "--config", arg(&typo)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
    let bad = write_config(tmp.path(), "bad.json", r#"{"filter": {"window": 1}}"#);
    assert_eq!(rvio(&["run", "--config", arg(&bad)]).status.code(), Some(2));
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        rvio(&["run", "--config", arg(&missing)]).status.code(),
        Some(2)
    );
}

#[test]
fn divergence_exits_with_three_and_dumps_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "div.json",
        r#"{"trajectory": {"duration": 2.0}, "init": {"sigma_velocity": 1e200}}"#,
    );
    let dir = tmp.path().join("div");
    let out = rvio(&["run", "--config", arg(&cfg), "--out", arg(&dir)]);
    assert_eq!(out.status.code(), Some(3));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("divergence.json")).unwrap()).unwrap();
    assert!(doc["message"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn observability_verb_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "obs.json",
        r#"{"trajectory": {"duration": 10.0}, "observability": {"max_features": 15}}"#,
    );
    let dir = tmp.path().join("obs");
    let out = rvio(&["observability", "--config", arg(&cfg), "--out", arg(&dir)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("scale: observable"), "{text}");
    let table = fs::read_to_string(dir.join("observability.csv")).unwrap();
    assert!(table.starts_with("stack,direction,residual,verdict\n"));
    assert!(table.contains("vio,scale,") && table.contains("range_vio,scale,"));
}
