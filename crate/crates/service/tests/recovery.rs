use std::fs::{self, OpenOptions};
use std::io::Write;

use crowdscreen_core::config::ProjectConfig;
use crowdscreen_core::crowdsim::{
    synthetic_project, BudgetCap, CrowdGateway, CrowdModel, GatewayError, SimulatedCrowd, VoteSubmission,
};
use crowdscreen_core::project::TaskAssignment;
use crowdscreen_core::{ScreeningProject, WorkerId};
use crowdscreen_service::engine::ProjectEngine;
use crowdscreen_service::store::ProjectStore;

/// Lets a fixed number of votes through, then refuses.
struct Limited<'a> {
    engine: &'a mut ProjectEngine,
    left: u64,
}

impl CrowdGateway for Limited<'_> {
    fn register_badge(&mut self, worker: &WorkerId) -> Result<(), GatewayError> {
        self.engine.register_badge(worker)
    }

    fn next_task(&mut self, worker: &WorkerId) -> Result<Option<TaskAssignment>, GatewayError> {
        if self.left == 0 {
            return Ok(None);
        }
        CrowdGateway::next_task(self.engine, worker)
    }

    fn submit_vote(&mut self, vote: &VoteSubmission) -> Result<(), GatewayError> {
        if self.left == 0 {
            return Err(GatewayError::Conflict("closed".into()));
        }
        CrowdGateway::submit_vote(self.engine, vote)?;
        self.left -= 1;
        Ok(())
    }
}

fn engine_with_votes(dir: &std::path::Path, votes: u64) -> ProjectEngine {
    let (inputs, truth) = synthetic_project(60, &[0.3, 0.5], 10, 1).unwrap();
    let store = ProjectStore::open(dir).unwrap();
    let mut engine = ProjectEngine::create(store, "prj-r", inputs, ProjectConfig::default()).unwrap();
    engine.start_initial_run(1).unwrap();
    let mut crowd = SimulatedCrowd::new(&CrowdModel::point(30, 0.85, 1), truth).unwrap();
    let mut limited = Limited { engine: &mut engine, left: votes };
    let _ = crowd.work(&mut limited, &mut BudgetCap::unlimited());
    assert_eq!(engine.project().last_sequence_no(), votes);
    engine
}

fn snapshot_sequence(store: &ProjectStore, id: &str) -> u64 {
    let snap: ScreeningProject = serde_json::from_str(&fs::read_to_string(store.snapshot_path(id)).unwrap()).unwrap();
    snap.last_sequence_no()
}

#[test]
fn snapshot_at_100_and_log_to_130() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with_votes(dir.path(), 130);
    let store = engine.store().clone();
    assert_eq!(snapshot_sequence(&store, "prj-r"), 100);
    assert_eq!(store.read_log("prj-r").unwrap().len(), 130);

    let (recovered, report) = store.recover("prj-r").unwrap();
    assert_eq!(report.snapshot_sequence_no, 100);
    assert_eq!(report.replayed, 30);
    assert_eq!(report.warning, None);
    assert_eq!(recovered.last_sequence_no(), 130);
    assert_eq!(&recovered, engine.project());
    assert_eq!(recovered.export().to_json(), engine.project().export().to_json());
}

#[test]
fn empty_log_recovers_the_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with_votes(dir.path(), 0);
    let (recovered, report) = engine.store().recover("prj-r").unwrap();
    assert_eq!(report.replayed, 0);
    assert_eq!(&recovered, engine.project());
}

#[test]
fn truncated_final_line_is_dropped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with_votes(dir.path(), 40);
    let store = engine.store().clone();
    let before = engine.project().clone();
    let log = store.log_path("prj-r");
    let good = fs::read(&log).unwrap();
    let mut file = OpenOptions::new().append(true).open(&log).unwrap();
    file.write_all(br#"{"sequence_no":41,"worker_id":"w00"#).unwrap();
    drop(file);

    let (recovered, report) = store.recover("prj-r").unwrap();
    let warning = report.warning.expect("warning");
    assert!(warning.contains("line 41"), "{warning}");
    assert_eq!(recovered, before);
    assert_eq!(fs::read(&log).unwrap(), good);
    assert!(log.with_extension("jsonl.corrupt").exists());

    // Appends after recovery stay replayable.
    let (mut engine, _) = ProjectEngine::open(store.clone(), "prj-r").unwrap();
    let (_, truth) = synthetic_project(60, &[0.3, 0.5], 10, 1).unwrap();
    let mut crowd = SimulatedCrowd::new(&CrowdModel::point(30, 0.85, 9), truth).unwrap();
    let mut limited = Limited { engine: &mut engine, left: 5 };
    let _ = crowd.work(&mut limited, &mut BudgetCap::unlimited());
    let (again, report) = store.recover("prj-r").unwrap();
    assert_eq!(report.warning, None);
    assert_eq!(&again, engine.project());
}

#[test]
fn corrupt_middle_line_halts_recovery_there() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with_votes(dir.path(), 20);
    let store = engine.store().clone();
    let log = store.log_path("prj-r");
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[9] = "garbage";
    fs::write(&log, lines.join("\n") + "\n").unwrap();

    let (recovered, report) = store.recover("prj-r").unwrap();
    assert_eq!(recovered.last_sequence_no(), 9);
    assert!(report.warning.unwrap().contains("line 10"));
    assert_eq!(store.read_log("prj-r").unwrap().len(), 9);
}

#[test]
fn unknown_project_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    assert!(store.recover("missing").is_err());
    assert!(store.list().unwrap().is_empty());
    assert_eq!(store.next_id().unwrap(), "prj-0001");
}
