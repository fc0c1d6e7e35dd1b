use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grf-active"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn select_prints_original_ids() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    fs::write(&g, "10 11 1\n11 12 1\n# detached pair\n0 1 1\n").unwrap();
    let out = run(&["select", "--graph", g.to_str().unwrap(), "--budget", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "step,node,cost,marginal_gain,gain_per_cost,risk_after");
    assert!(lines[2].starts_with("1,11,1,"), "{text}");
}

#[test]
fn first_query_reports_center_of_path() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    fs::write(&g, "0 1 1\n1 2 1\n").unwrap();
    let out = run(&["first-query", "--graph", g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "node,survey_risk\n0,5\n1,2\n2,5\n# argmin 1\n");
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    fs::write(&g, "0 1 1\n1 2 -3\n").unwrap();
    let out = run(&["select", "--graph", g.to_str().unwrap(), "--budget", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = dir.path().join("missing.txt");
    assert_eq!(
        run(&["first-query", "--graph", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    fs::write(&g, "0 1 1e-300\n1 2 1e-300\n").unwrap();
    assert_eq!(
        run(&["first-query", "--graph", g.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn verify_and_replay_pass() {
    let out = run(&["verify", "--suite", "aofs", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("aofs,20,0,0,,pass"));
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    fs::write(&w, "# check aofs L1=0 L2=2\n# sigma 10 10 10\n0 1 1\n1 2 1\n").unwrap();
    let out = run(&["verify", "--replay", w.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "violation 0\n");
}
