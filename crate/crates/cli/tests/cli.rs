use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn laru(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laru"))
        .args(args)
        .env_remove("LARU_SEED")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn zipf_trace(name: &str, n: &str) -> PathBuf {
    let t = scratch(name);
    let out = laru(&["gen", "zipf", "--n", n, "--alphabet", "200", "--seed", "3", "-o", path(&t)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    t
}

#[test]
fn gen_writes_header_and_n_rows() {
    let out = laru(&["gen", "zipf", "--n", "500", "--alphabet", "50"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("key"));
    assert_eq!(lines.count(), 500);

    let out = laru(&["gen", "scan", "--cycle", "5", "--rounds", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 15);
}

#[test]
fn lru_never_queries_a_predictor() {
    let t = zipf_trace("lru.csv", "2000");
    let out = laru(&["run", "--policy", "lru", "--trace", path(&t), "--k", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "lru");
    assert_eq!(row[7], "0");
    assert_eq!(row[9], "n/a");
}

#[test]
fn verify_exit_codes() {
    let out = laru(&["verify", "--budget", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!out.stderr.is_empty());

    let out = laru(&["verify", "--budget", "50", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = laru(&["verify", "--budget", "50", "--inject-bug"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let t = zipf_trace("usage.csv", "100");
    assert_eq!(laru(&["run", "--policy", "lru", "--trace", path(&t), "--k", "0"]).status.code(), Some(1));
    assert_eq!(laru(&["run", "--policy", "nope", "--trace", path(&t), "--k", "4"]).status.code(), Some(1));
    assert_eq!(laru(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        laru(&["run", "--policy", "lru", "--trace", "/nonexistent/trace.csv", "--k", "4"]).status.code(),
        Some(1)
    );
}
