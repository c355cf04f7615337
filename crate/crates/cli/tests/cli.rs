use std::process::{Command, Output};

fn treefire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treefire"))
        .args(args)
        .env_remove("TREEFIRE_SEED")
        .env_remove("TREEFIRE_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(k.to_string());
        let args = ["simulate-ff", "--n", "10", "--lambda", "0.01", "--horizon", "2", "--seed", "7", "--out"];
        let out = treefire(&[&args[..], &[path.to_str().unwrap()]].concat());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(path.join("events.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(String::from_utf8_lossy(&outputs[0]).lines().count() > 1);
}

#[test]
fn zero_rate_is_a_config_error() {
    let out = treefire(&["simulate-ff", "--lambda", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pure-growth"));
}

#[test]
fn oversized_tree_is_rejected() {
    assert_eq!(code(&treefire(&["simulate-ff", "--r", "3", "--n", "60"])), 2);
}

#[test]
fn bad_flags_and_help() {
    assert_eq!(code(&treefire(&["simulate-ff", "--nope"])), 2);
    assert_eq!(code(&treefire(&["--help"])), 0);
    assert_eq!(code(&treefire(&["converge", "--delta", "-1"])), 2);
}

#[test]
fn event_cap_exit_code() {
    let out = treefire(&["simulate-ff", "--n", "10", "--lambda", "0.5", "--horizon", "5", "--max-events", "10"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "seed = 11\ntrials = 50\n[sdp]\ntrials = 70\ndelta = 0.3\n").unwrap();
    let cfg = path.to_str().unwrap();

    let out = treefire(&["--config", cfg, "--dry-run", "sdp", "--delta", "0.1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 11"), "{text}");
    assert!(text.contains("trials = 70"));
    assert!(text.contains("delta = 0.1"));

    let out = Command::new(env!("CARGO_BIN_EXE_treefire"))
        .args(["--config", cfg, "--dry-run", "sdp"])
        .env("TREEFIRE_SEED", "99")
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("seed = 99"));

    std::fs::write(&path, "[sdp]\nsede = 3\n").unwrap();
    assert_eq!(code(&treefire(&["--config", cfg, "sdp"])), 2);
}

#[test]
fn summaries_carry_schema_version() {
    let out = treefire(&["theta", "--p-list", "0.75"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "theta");
}
