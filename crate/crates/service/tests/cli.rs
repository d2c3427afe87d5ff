mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;
use serde_json::Value;

fn cli(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdscreen"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("CROWDSCREEN_PROJECT")
        .output()
        .unwrap()
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn init(store: &Path) -> String {
    let out = cli(
        store,
        &[
            "--json",
            "init",
            "--papers",
            fixture("papers.csv").to_str().unwrap(),
            "--criteria",
            fixture("criteria.json").to_str().unwrap(),
            "--tests",
            fixture("tests.json").to_str().unwrap(),
            "--config",
            fixture("config.json").to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    json_out(&out)["project_id"].as_str().unwrap().to_string()
}

#[test]
fn status_json_on_fresh_project() {
    let dir = tempfile::tempdir().unwrap();
    let id = init(dir.path());
    let out = cli(dir.path(), &["--json", "--project", &id, "status"]);
    assert_eq!(out.status.code(), Some(0));
    let status = json_out(&out);
    assert_eq!(status["phase"], "setup");
    assert_eq!(status["spent_cents"], 0);
    assert_eq!(status["spent"], "$0.00");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    let out = cli(dir.path(), &["--json", "step", "--votes", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_out(&out)["error"], "state");

    let out = cli(
        dir.path(),
        &[
            "init",
            "--papers",
            fixture("criteria.json").to_str().unwrap(),
            "--criteria",
            fixture("criteria.json").to_str().unwrap(),
            "--tests",
            fixture("tests.json").to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = cli(dir.path(), &["aggregate", "--method", "spectral", "--matrix", fixture("unanimous_matrix.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(cli(dir.path(), &["initial-run", "--seed", "3"]).status.code(), Some(0));
    assert_eq!(cli(dir.path(), &["initial-run", "--seed", "3"]).status.code(), Some(2));
    assert_eq!(cli(dir.path(), &["stop"]).status.code(), Some(0));
    let status = json_out(&cli(dir.path(), &["--json", "status"]));
    assert_eq!(status["phase"], "finished");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    let crowd = fixture("crowd.json");
    let run = |seed: &str| {
        let out = cli(dir.path(), &["simulate", "--crowd", crowd.to_str().unwrap(), "--seed", seed]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
    let doc: Value = serde_json::from_slice(&a).unwrap();
    assert!(doc["papers"].as_array().unwrap().iter().all(|p| p["status"] != "undecided"));
    // Offline simulation leaves the stored project untouched.
    assert_eq!(json_out(&cli(dir.path(), &["--json", "status"]))["phase"], "setup");

    let files = cli(
        dir.path(),
        &[
            "simulate",
            "--crowd",
            crowd.to_str().unwrap(),
            "--seed",
            "7",
            "--papers",
            fixture("papers.csv").to_str().unwrap(),
            "--criteria",
            fixture("criteria.json").to_str().unwrap(),
            "--tests",
            fixture("tests.json").to_str().unwrap(),
        ],
    );
    let doc_files: Value = serde_json::from_slice(&files.stdout).unwrap();
    assert_eq!(doc_files["papers"], doc["papers"]);
}

#[test]
fn aggregate_majority_on_unanimous_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = fixture("unanimous_matrix.json");
    for method in ["majority", "dawid_skene"] {
        let out = cli(dir.path(), &["--json", "aggregate", "--method", method, "--matrix", matrix.to_str().unwrap()]);
        assert!(out.status.success());
        let labels: Vec<String> = json_out(&out)["labels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| l["label"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(labels, ["applies", "not_applies", "not_applies", "applies"], "{method}");
    }
}

#[test]
fn export_and_curves_write_files() {
    let dir = tempfile::tempdir().unwrap();
    init(dir.path());
    let export = dir.path().join("export.json");
    assert!(cli(dir.path(), &["export", "--out", export.to_str().unwrap()]).status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&export).unwrap()).unwrap();
    assert_eq!(doc["papers"].as_array().unwrap().len(), 40);

    let csv = dir.path().join("curves.csv");
    let out = cli(
        dir.path(),
        &["curves", "--algorithms", "shortest_run,fixed_j:3", "--trials", "2", "--checkpoints", "60,120", "--out", csv.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("algorithm,budget_votes,budget_cents,precision,recall,loss,trials"));
    assert_eq!(lines.count(), 4);

    let est = json_out(&cli(dir.path(), &["--json", "estimate", "--trials", "2"]));
    assert_eq!(est["criteria"], 2);
    assert_eq!(est["initial_run_cents"], 1200);
}
