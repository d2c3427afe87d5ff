//! A stored project with write-through persistence.

use crowdscreen_core::config::ProjectConfig;
use crowdscreen_core::crowdsim::{CrowdGateway, GatewayError, VoteSubmission};
use crowdscreen_core::domain::{ProjectInputs, VoteRequest};
use crowdscreen_core::project::TaskAssignment;
use crowdscreen_core::strategy::GiveUpEvent;
use crowdscreen_core::{ScreeningProject, Vote, VoteError, WorkerId};

use crate::error::ServiceError;
use crate::store::{ProjectStore, RecoveryReport};

/// Votes between periodic snapshots; commands always snapshot.
pub const SNAPSHOT_EVERY: u64 = 100;

pub struct ProjectEngine {
    store: ProjectStore,
    project: ScreeningProject,
    votes_since_snapshot: u64,
}

impl ProjectEngine {
    pub fn create(
        store: ProjectStore,
        id: &str,
        inputs: ProjectInputs,
        config: ProjectConfig,
    ) -> Result<Self, ServiceError> {
        let project = ScreeningProject::create(id, inputs, config)?;
        store.create(&project)?;
        Ok(Self {
            store,
            project,
            votes_since_snapshot: 0,
        })
    }

    pub fn open(store: ProjectStore, id: &str) -> Result<(Self, RecoveryReport), ServiceError> {
        let (project, report) = store.recover(id)?;
        let engine = Self {
            store,
            project,
            votes_since_snapshot: report.replayed,
        };
        Ok((engine, report))
    }

    pub fn project(&self) -> &ScreeningProject {
        &self.project
    }

    pub fn store(&self) -> &ProjectStore {
        &self.store
    }

    fn snapshot(&mut self) -> Result<(), ServiceError> {
        self.store.write_snapshot(&self.project)?;
        self.votes_since_snapshot = 0;
        Ok(())
    }

    /// Runs a command on a scratch copy and commits it only once the snapshot is on disk.
    fn command<T>(
        &mut self,
        f: impl FnOnce(&mut ScreeningProject) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let mut next = self.project.clone();
        let out = f(&mut next)?;
        self.store.write_snapshot(&next)?;
        self.project = next;
        self.votes_since_snapshot = 0;
        Ok(out)
    }

    pub fn register_worker(&mut self, worker: WorkerId, badge: bool) -> Result<(), ServiceError> {
        self.command(|p| Ok(p.register_worker(worker, badge)?))
    }

    pub fn start_initial_run(&mut self, seed: u64) -> Result<Vec<VoteRequest>, ServiceError> {
        self.command(|p| Ok(p.start_initial_run(seed)?))
    }

    pub fn step(&mut self, vote_budget: u64) -> Result<Vec<VoteRequest>, ServiceError> {
        self.command(|p| Ok(p.step(vote_budget)?))
    }

    pub fn stop(&mut self) -> Result<Vec<GiveUpEvent>, ServiceError> {
        self.command(|p| Ok(p.stop()?))
    }

    /// Validate, append to the log, then apply.
    pub fn submit_vote(&mut self, sub: &VoteSubmission) -> Result<Vote, ServiceError> {
        let vote = self.project.prepare_vote(sub)?;
        self.store.append_vote(self.project.id(), &vote)?;
        self.project
            .replay_vote(&vote)
            .expect("a prepared vote applies to the state it was prepared on");
        self.votes_since_snapshot += 1;
        if self.votes_since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot()?;
        }
        Ok(vote)
    }

    pub fn next_task(&self, worker: &WorkerId) -> Result<Option<TaskAssignment>, VoteError> {
        self.project.next_task(worker)
    }
}

impl CrowdGateway for ProjectEngine {
    fn register_badge(&mut self, worker: &WorkerId) -> Result<(), GatewayError> {
        self.register_worker(worker.clone(), true)
            .map_err(|e| GatewayError::Conflict(e.to_string()))
    }

    fn next_task(&mut self, worker: &WorkerId) -> Result<Option<TaskAssignment>, GatewayError> {
        ProjectEngine::next_task(self, worker).map_err(GatewayError::from)
    }

    fn submit_vote(&mut self, vote: &VoteSubmission) -> Result<(), GatewayError> {
        match ProjectEngine::submit_vote(self, vote) {
            Ok(_) => Ok(()),
            Err(ServiceError::Vote(e)) => Err(GatewayError::from(e)),
            Err(e) => Err(GatewayError::Transport(e.to_string())),
        }
    }
}
