use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lowrank(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowrank")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn verify_is_byte_identical_under_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "v.json", r#"{"schema_version": 1, "trials": 50, "fd_points": 3}"#);
    let a = lowrank(&["verify", "--config", &cfg, "--seed", "1"], tmp.path());
    let b = lowrank(&["--seed", "1", "--config", &cfg, "verify"], tmp.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["seed"], 1);
    assert_eq!(report["passed"], true);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("verify", r#"{"schema_version": 1, "trials": 0}"#),
        ("verify", r#"{"schema_version": 1, "bogus": true}"#),
        ("verify", r#"{"schema_version": 2}"#),
        ("verify", "not json"),
        ("sweep", r#"{"schema_version": 1, "p_values": [0]}"#),
        ("landscape", r#"{"schema_version": 1, "r": 2}"#),
        ("solve", r#"{"schema_version": 1, "starts": 0}"#),
        ("geometry", r#"{"schema_version": 1, "target": {"n": 3, "m": 3, "r": 4}}"#),
    ];
    for (i, (cmd, body)) in cases.iter().enumerate() {
        let cfg = write(tmp.path(), &format!("bad{i}.json"), body);
        let out = lowrank(&[cmd, "--config", &cfg], tmp.path());
        assert_eq!(code(&out), 2, "{cmd} {body}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(code(&lowrank(&["no-such-command"], tmp.path())), 2);
    assert_eq!(code(&lowrank(&["verify", "--config", "/nonexistent/x.json"], tmp.path())), 2);
}

#[test]
fn landscape_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = lowrank(&["landscape", "--out", out_dir.to_str().unwrap(), "--jobs", "1"], tmp.path());
    assert_eq!(code(&out), 0);
    for f in ["config.json", "manifest.json", "summary.json", "grid.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let grid = fs::read_to_string(out_dir.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("u1,u2,value,grad_norm"));
    assert_eq!(grid.lines().count(), 1 + 81 * 81);
    // Every row recomputes from its coordinates.
    for line in grid.lines().skip(1).step_by(97) {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        let (u1, u2) = (v[0], v[1]);
        let h = 0.5 * ((u1 * u1 - 1.0).powi(2) + 2.0 * (u1 * u2 - 1.0).powi(2) + (u2 * u2 - 1.0).powi(2));
        assert!((h - v[2]).abs() <= 1e-12 * h.max(1.0));
    }
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["points"], 81);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "landscape");
    assert_eq!(manifest["jobs"], 1);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["basins"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_divergence_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.json",
        r#"{"schema_version": 1, "init": {"kind": "random", "scale": 3.0},
            "solver": {"step_size": 5.0, "max_iters": 100}}"#,
    );
    let out = lowrank(&["solve", "--config", &cfg], tmp.path());
    assert_eq!(code(&out), 1);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["starts"][0]["error"].as_str().unwrap().contains("diverged"));
}

#[test]
fn solve_writes_trajectories_that_match_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("solve");
    let cfg = write(tmp.path(), "s.json", r#"{"schema_version": 1, "starts": 2, "solver": {"max_iters": 2000}}"#);
    let out = lowrank(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for k in 0..2 {
        let csv = fs::read_to_string(out_dir.join(format!("trajectory_{k:03}.csv"))).unwrap();
        let last: Vec<f64> = csv.lines().last().unwrap().split(',').skip(1).map(|t| t.parse().unwrap()).collect();
        assert_eq!(last[0], report["starts"][k]["value"].as_f64().unwrap());
        assert_eq!(csv.lines().count() - 2, report["starts"][k]["iterations"].as_u64().unwrap() as usize);
        assert_eq!(report["starts"][k]["rate_audit"]["passed"], true);
    }
}

#[test]
fn sweep_and_geometry_emit_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep_dir = tmp.path().join("sweep");
    let cfg = write(
        tmp.path(),
        "sw.json",
        r#"{"schema_version": 1, "n": 5, "m": 4, "r": 1, "p_values": [8, 200], "seeds": 3}"#,
    );
    let out = lowrank(&["sweep", "--config", &cfg, "--out", sweep_dir.to_str().unwrap()], tmp.path());
    assert!(matches!(code(&out), 0 | 1));
    let cells = fs::read_to_string(sweep_dir.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 6);
    assert!(sweep_dir.join("rates.csv").exists());

    let geo_dir = tmp.path().join("geo");
    let cfg = write(tmp.path(), "g.json", r#"{"schema_version": 1, "ground_truths": 1, "per_region": 4, "cover_points": 100}"#);
    let out = lowrank(&["geometry", "--config", &cfg, "--out", geo_dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(geo_dir.join("points.csv")).unwrap().lines().count(), 1 + 20);
    let first: serde_json::Value =
        serde_json::from_str(fs::read_to_string(geo_dir.join("points.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["point"].as_array().unwrap().len(), 11 * 2);
}
