use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sfcprot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfcprot"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn solve_check_and_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sfcprot(d, &["generate", "--builtin", "-o", "b.json"])
        .status
        .success());

    let out = sfcprot(
        d,
        &[
            "solve",
            "--scenario",
            "b.json",
            "--algorithm",
            "DP",
            "--time-limit",
            "2",
            "-o",
            "dp.json",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["feasible"], true);
    assert!(v["metrics"]["min_reliability"].as_f64().unwrap() >= 0.98);

    let out = sfcprot(d, &["check", "b.json", "dp.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["failures"].as_array().unwrap().len(), 0);

    let out = sfcprot(
        d,
        &[
            "mc-validate",
            "b.json",
            "dp.json",
            "--trials",
            "20000",
            "-o",
            "mc.csv",
        ],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(d.join("mc.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("service_id,analytic,empirical,half_width,trials")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn unprotected_layout_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    sfcprot(d, &["generate", "--builtin", "-o", "b.json"]);
    let out = sfcprot(
        d,
        &[
            "solve",
            "--scenario",
            "b.json",
            "--algorithm",
            "NP",
            "-o",
            "np.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let out = sfcprot(d, &["check", "b.json", "np.json"]);
    assert_eq!(out.status.code(), Some(2));
    let v = stdout_json(&out);
    assert_eq!(v["feasible"], false);
    assert!(v["failures"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == false));
    let out = sfcprot(d, &["check", "b.json", "np.json", "--no-reliability"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn rcg_writes_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    sfcprot(d, &["generate", "--toy", "--seed", "3", "-o", "t.json"]);
    let out = sfcprot(
        d,
        &[
            "solve",
            "--scenario",
            "t.json",
            "--algorithm",
            "rcg",
            "--seed",
            "1",
            "--telemetry",
            "g.csv",
        ],
    );
    assert_ne!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = fs::read_to_string(d.join("g.csv")).unwrap();
    let gens = stdout_json(&out)["generations"].as_u64().unwrap();
    assert_eq!(rows.lines().count() as u64, gens + 1);
}

#[test]
fn sweep_runs_a_plan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = r#"
algorithms = ["NP", "RP"]
service_counts = [2]
seeds = [1, 2, 3]
output_dir = "results"

[scenario]
kind = "generate"
nodes = 10
links = 15
"#;
    fs::write(d.join("plan.toml"), plan).unwrap();
    let out = sfcprot(d, &["sweep", "plan.toml"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout_json(&out)["runs"], 6);
    assert_eq!(
        fs::read_to_string(d.join("results/raw.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );
    assert_eq!(
        fs::read_to_string(d.join("results/aggregate.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sfcprot(d, &["solve", "--scenario", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    sfcprot(d, &["generate", "--builtin", "-o", "b.json"]);
    let out = sfcprot(d, &["solve", "--scenario", "b.json", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(d.join("plan.toml"), "algorithms = []").unwrap();
    assert_eq!(sfcprot(d, &["sweep", "plan.toml"]).status.code(), Some(1));
}
