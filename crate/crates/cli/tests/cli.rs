use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn phonemap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonemap")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{report}"))
        .to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, config: &str) -> PathBuf {
    let cfg = dir.join("sim.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("sim");
    let o = phonemap(&["simgen", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn write_tum(path: &Path) {
    let mut text = String::from("# t tx ty tz qx qy qz qw\n");
    for i in 0..200 {
        let t = i as f64 * 0.1;
        let yaw = 0.05 * t;
        let (s, c) = ((0.5 * yaw).sin(), (0.5 * yaw).cos());
        text.push_str(&format!("{t:.3} {:.6} {:.6} 0.0 0.0 0.0 {s:.9} {c:.9}\n", t * 0.8, (0.3 * t).sin()));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn rpe_of_identical_trajectories_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let tum = dir.path().join("est.tum");
    write_tum(&tum);
    let o = phonemap(&["rpe", path(&tum), path(&tum), "--lengths", "2,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert_eq!(value(&report, "metric.translation"), "0.000000000 %");
    assert_eq!(value(&report, "metric.rotation"), "0.000000000 deg/m");
}

#[test]
fn c2c_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "seed = 3\nduration = 6.0\n\n[room]\npoints_per_scan = 500\n");
    let map = dir.path().join("map.ply");
    let o = phonemap(&["aggregate", path(&sim.join("scans")), path(&sim.join("groundtruth.tum")), "--out", path(&map)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = phonemap(&["c2c", path(&map), path(&map), "--radius", "0.3", "--max-dist", "0.7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert_eq!(value(&report, "metric.mean_distance"), "0.000000000 m");
    assert_eq!(value(&report, "param.radius"), "0.3");
    assert_eq!(value(&report, "param.max_dist"), "0.7");
}

#[test]
fn calib_recovers_sidecar_offset() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "seed = 9\nduration = 60.0\ninjected_offset = 0.012\n\n[room]\npoints_per_scan = 10\n");
    let truth = std::fs::read_to_string(sim.join("truth.txt")).unwrap();
    let injected: f64 = value(&truth, "injected_offset").parse().unwrap();
    let before = std::fs::read(sim.join("imu.csv")).unwrap();
    let o = phonemap(&["calib", path(&sim.join("imu.csv")), path(&sim.join("odom.tum"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let estimate: f64 = value(&report, "metric.time_offset").split(' ').next().unwrap().parse().unwrap();
    assert!((estimate - injected).abs() < 1e-3, "{estimate} vs {injected}");
    assert_eq!(std::fs::read(sim.join("imu.csv")).unwrap(), before);
    assert!(value(&report, "input.imu").contains("sha256:"));
}

#[test]
fn usage_errors_exit_one() {
    let o = phonemap(&["ate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: usage:"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let tum = dir.path().join("t.tum");
    write_tum(&tum);
    let o = phonemap(&["c2c", path(&tum), path(&tum), "--radius", "-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tum");
    let o = phonemap(&["ate", path(&missing), path(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: data:"), "{err}");

    let bad = dir.path().join("bad.tum");
    std::fs::write(&bad, "0.0 1 2 3\n").unwrap();
    let o = phonemap(&["ate", path(&bad), path(&bad)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn degenerate_calibration_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(
        dir.path(),
        "seed = 2\nduration = 30.0\n\n[motion]\nangle_amplitude = [0.0, 0.0, 0.0]\nposition_amplitude = [0.0, 0.0, 0.0]\nbursts = 0\n\n[room]\npoints_per_scan = 10\n",
    );
    let o = phonemap(&["calib", path(&sim.join("imu.csv")), path(&sim.join("odom.tum"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: algorithm:"));
}

#[test]
fn report_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let tum = dir.path().join("t.tum");
    write_tum(&tum);
    let report = dir.path().join("report.txt");
    let o = phonemap(&["ate", path(&tum), path(&tum), "--report", path(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&report).unwrap(), stdout(&o));
}
