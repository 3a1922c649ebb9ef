//! End-to-end checks of the `avoc` binary: exit codes, artifact layout,
//! reproducibility of dumped configurations, and validation messages.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn avoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avoc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn tiny_test1_run_succeeds_and_dumped_config_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = avoc(&[
        "test1",
        "--n-max",
        "2",
        "--grid",
        "5",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = read(&first.join("report.csv"));
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("N,alpha1,w1,error,order,bound_rhs,bound_ok"));
    assert_eq!(lines.count(), 2);
    assert!(first.join("trajectory.csv").exists());
    assert!(first.join("control.csv").exists());

    // Round trip: the dumped config reproduces every artifact byte for byte.
    let second = dir.path().join("second");
    let rerun = avoc(&[
        "run",
        first.join("config.toml").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(rerun.status.success(), "stderr: {}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(report, read(&second.join("report.csv")));
    assert_eq!(
        read(&first.join("trajectory.csv")),
        read(&second.join("trajectory.csv"))
    );
    assert_eq!(
        read(&first.join("control.csv")),
        read(&second.join("control.csv"))
    );
}

#[test]
fn longer_n_range_extends_the_shorter_report() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short");
    let long = dir.path().join("long");
    let a = avoc(&["test1", "--n-max", "2", "--grid", "5", "--out", short.to_str().unwrap()]);
    assert!(a.status.success());
    let b = avoc(&["test1", "--n-max", "3", "--grid", "5", "--out", long.to_str().unwrap()]);
    assert!(b.status.success());
    let short_report = read(&short.join("report.csv"));
    let long_report = read(&long.join("report.csv"));
    // Orders and bounds are per-row quantities, so the shorter report is a
    // byte prefix of the longer one.
    assert!(long_report.starts_with(&short_report));
    assert_eq!(long_report.lines().count(), short_report.lines().count() + 1);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let a = avoc(&[
        "test1", "--n-max", "1", "--grid", "5", "--jobs", "1", "--out", one.to_str().unwrap(),
    ]);
    assert!(a.status.success());
    let b = avoc(&[
        "test1", "--n-max", "1", "--grid", "5", "--jobs", "2", "--out", two.to_str().unwrap(),
    ]);
    assert!(b.status.success());
    assert_eq!(read(&one.join("report.csv")), read(&two.join("report.csv")));
}

#[test]
fn test2_single_row_has_no_order_value() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("t2");
    let out = avoc(&[
        "test2",
        "--n-max",
        "1",
        "--grid",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = read(&out_dir.join("report.csv"));
    let mut lines = report.lines().skip(1);
    let row = lines.next().unwrap();
    assert!(lines.next().is_none(), "expected a single data row");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "1");
    assert_eq!(fields[4], "", "order must be empty on the first row");
}

const BAD_WEIGHTS_CONFIG: &str = r#"
name = "bad-weights"

[problem]
state_dim = 1
t_start = 0.0
t_end = 1.0
control_lo = [-1.0]
control_hi = [1.0]
cost = "quadratic_control"

[dynamics]
kind = "builtin_test1"
true_atom = 1

[schedule]
rule = "halving_tail"
n_min = 1
n_max = 2

[grid]
lo = [-1.0]
hi = [1.0]
counts = [3]

[box]
state_lo = [-3.0]
state_hi = [3.0]
control_lo = [-1.0]
control_hi = [1.0]

[trajectory]
x0 = [1.0]
weights = [0.5, 0.1, 0.1, 0.1, 0.1]
"#;

#[test]
fn weights_not_summing_to_one_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, BAD_WEIGHTS_CONFIG).unwrap();
    let out = avoc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sum to 1"), "stderr: {stderr}");
}

#[test]
fn degenerate_horizon_exits_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let config = BAD_WEIGHTS_CONFIG
        .replace("t_end = 1.0", "t_end = 0.0")
        .replace("weights = [0.5, 0.1, 0.1, 0.1, 0.1]", "weights = [1.0, 0.0, 0.0, 0.0, 0.0]");
    fs::write(&path, config).unwrap();
    let out = avoc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("t_start < t_end"), "stderr: {stderr}");
}

#[test]
fn underdeclared_cost_lipschitz_exits_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    // The terminal cost -sum(x) has constant 1; declaring 0.1 must fail the
    // sampled validation before any solve runs.
    let config = BAD_WEIGHTS_CONFIG
        .replace("cost = \"quadratic_control\"", "cost = \"quadratic_control\"\nlipschitz_h = 0.1")
        .replace("weights = [0.5, 0.1, 0.1, 0.1, 0.1]", "weights = [1.0, 0.0, 0.0, 0.0, 0.0]");
    fs::write(&path, config).unwrap();
    let out = avoc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("terminal cost"), "stderr: {stderr}");
}

#[test]
fn malformed_toml_reports_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, "name = \"x\"\n[problem\nstate_dim = 1\n").unwrap();
    let out = avoc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "stderr: {stderr}");
}

#[test]
fn missing_config_file_exits_with_code_1() {
    let out = avoc(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
}
