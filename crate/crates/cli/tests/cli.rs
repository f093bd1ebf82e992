use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epictrl_core::io::Snapshot;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn epictrl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epictrl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

/// Copy a shipped scenario into `dir`, applying textual replacements.
fn variant(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(scenario(name)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from} not in {name}");
        text = text.replacen(from, to, 1);
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_uniform_data_conserves_population() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("ode_limit.toml");
    let out = epictrl(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("timeseries.csv")).unwrap();
    assert!(csv.starts_with("t,int_s,int_e,int_i,int_r,total,min_s,min_e,min_i,min_r,max_s,max_e,max_i,max_r\n"));
    let total = column(&csv, "total");
    assert_eq!(total.len(), 1001);
    for t in &total {
        assert!((t - total[0]).abs() <= 1e-12 * total[0]);
    }
}

#[test]
fn optimize_below_threshold_from_zero_stops_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "below_threshold_1d.toml", &[("initial_guess = \"max\"", "initial_guess = \"zero\"")]);
    let out = epictrl(&["optimize", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/iterations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert_eq!(column(&csv, "cost"), vec![0.0]);
    for name in ["controls.csv", "control_first.csv", "control_last.csv", "timeseries.csv", "metadata.json"] {
        assert!(tmp.path().join("out").join(name).exists(), "{name}");
    }
}

#[test]
fn convergence_table_has_monotone_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("reference_1d.toml");
    let out = epictrl(
        &["convergence", "--config", cfg.to_str().unwrap(), "--tau-list", "0.25,0.125,0.0625"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let err = column_opt(&csv, "error");
    assert!(err[0] > err[1] && err[1] > err[2], "{err:?}");
}

fn column_opt(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.filter_map(|l| l.split(',').nth(k).unwrap().parse().ok()).collect()
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "reference_1d.toml", &[("steps = 1024", "steps = 256")]);
    let cfg = cfg.to_str().unwrap();
    for run in ["a", "b"] {
        let out = epictrl(&["simulate", "--config", cfg, "--dump-adjoint"], &tmp.path().join(run));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (read_all(&tmp.path().join("a")), read_all(&tmp.path().join("b")));
    assert!(a.len() >= 5);
    assert_eq!(a, b);

    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("a/metadata.json")).unwrap()).unwrap();
    let expected = epictrl_cli::config_hash(&fs::read(cfg).unwrap());
    assert_eq!(meta["config"]["sha256"], serde_json::Value::String(expected));
    assert_eq!(meta["solver"]["settings"]["kind"], "direct");
}

#[test]
fn snapshots_written_by_the_cli_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "reference_1d.toml", &[("steps = 1024", "steps = 128")]);
    let out = epictrl(&["simulate", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert!(out.status.success());
    let text = fs::read_to_string(tmp.path().join("o/state_final.csv")).unwrap();
    let snap = Snapshot::parse(&text).unwrap();
    assert_eq!(snap.level, 128);
    assert_eq!(snap.columns, ["s", "e", "i", "r"]);
    assert_eq!(snap.to_csv(), text);
}

#[test]
fn gradcheck_tables_and_thread_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "reference_1d.toml", &[("steps = 1024", "steps = 256")]);
    let cfg = cfg.to_str().unwrap();
    let out = epictrl(&["gradcheck", "--tangent", "--config", cfg], &tmp.path().join("many"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let single = Command::new(env!("CARGO_BIN_EXE_epictrl"))
        .args(["gradcheck", "--tangent", "--config", cfg, "--out"])
        .arg(tmp.path().join("one"))
        .env("EPICTRL_THREADS", "1")
        .output()
        .unwrap();
    assert!(single.status.success());
    let grad = fs::read_to_string(tmp.path().join("many/gradient.csv")).unwrap();
    assert_eq!(grad, fs::read_to_string(tmp.path().join("one/gradient.csv")).unwrap());
    assert_eq!(grad.lines().count(), 5);
    for rel in column(&grad, "relative_error") {
        assert!(rel < 1e-3, "{grad}");
    }
    let rem = fs::read_to_string(tmp.path().join("many/remainder.csv")).unwrap();
    for ratio in column(&rem, "ratio") {
        assert!((3.0..=5.0).contains(&ratio), "{rem}");
    }
}

#[test]
fn dt_override_changes_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("reference_1d.toml");
    let out = epictrl(&["simulate", "--config", cfg.to_str().unwrap(), "--dt", "0.01"], tmp.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);
    let bad = epictrl(&["simulate", "--config", cfg.to_str().unwrap(), "--dt", "0.3"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn validation_failure_exits_2_with_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "reference_1d.toml", &[("sigma = 0.2", "sigma = 0.0")]);
    let out = epictrl(&["simulate", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "validation");
    let msg = record["error"]["message"].as_str().unwrap();
    assert!(msg.contains("rates.sigma") && msg.contains("sigma must be positive"), "{msg}");
}

#[test]
fn solver_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "outbreak_2d.toml", &[("max_iter = 2000", "max_iter = 1")]);
    let out = epictrl(&["simulate", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(3));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "numerical");
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epictrl(&["simulate"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
