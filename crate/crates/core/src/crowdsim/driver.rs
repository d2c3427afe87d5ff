use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{spawn_workers, CrowdModel, GroundTruth, SimWorker};
use crate::domain::{CriterionId, Label, PaperId, WorkerId};
use crate::error::DomainError;
use crate::project::{TaskAssignment, TaskKind};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GatewayError {
    #[error("worker is excluded or unqualified")]
    Forbidden,
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("transport: {0}")]
    Transport(String),
}

/// A vote as the crowd submits it. Over HTTP the worker travels inside the
/// assignment id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSubmission {
    pub assignment_id: String,
    pub worker_id: WorkerId,
    pub paper_id: PaperId,
    pub criterion_id: CriterionId,
    pub label: Label,
}

/// The task/vote boundary a crowd talks to: in-process or over HTTP.
pub trait CrowdGateway {
    fn register_badge(&mut self, worker: &WorkerId) -> Result<(), GatewayError>;
    fn next_task(&mut self, worker: &WorkerId) -> Result<Option<TaskAssignment>, GatewayError>;
    fn submit_vote(&mut self, vote: &VoteSubmission) -> Result<(), GatewayError>;
}

/// Optional cap on billable votes the crowd may cast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetCap {
    remaining: Option<u64>,
}

impl BudgetCap {
    pub fn unlimited() -> Self {
        Self { remaining: None }
    }

    pub fn votes(votes: u64) -> Self {
        Self { remaining: Some(votes) }
    }

    pub fn exhausted(&self) -> bool {
        self.remaining == Some(0)
    }

    pub fn remaining(&self) -> Option<u64> {
        self.remaining
    }

    fn spend(&mut self) {
        if let Some(r) = self.remaining.as_mut() {
            *r = r.saturating_sub(1);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkSummary {
    pub votes: u64,
    pub billable: u64,
}

/// Drives simulated workers against a [`CrowdGateway`] until no worker can
/// make progress or the budget cap is reached.
pub struct SimulatedCrowd {
    workers: Vec<SimWorker>,
    truth: GroundTruth,
    criterion_accuracy: BTreeMap<CriterionId, f64>,
    rng: ChaCha8Rng,
    blocked: Vec<bool>,
    badges_registered: bool,
}

impl SimulatedCrowd {
    pub fn new(model: &CrowdModel, truth: GroundTruth) -> Result<Self, DomainError> {
        let workers = spawn_workers(model)?;
        let blocked = vec![false; workers.len()];
        Ok(Self {
            workers,
            truth,
            criterion_accuracy: model.criterion_accuracy.clone(),
            rng: seed::rng_for(model.seed, "crowd-votes", 0),
            blocked,
            badges_registered: false,
        })
    }

    pub fn workers(&self) -> &[SimWorker] {
        &self.workers
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    fn accuracy(&self, worker: usize, criterion: &CriterionId) -> f64 {
        self.criterion_accuracy
            .get(criterion)
            .copied()
            .unwrap_or_else(|| self.workers[worker].oracle_accuracy())
    }

    pub fn work<G: CrowdGateway>(&mut self, gateway: &mut G, cap: &mut BudgetCap) -> Result<WorkSummary, GatewayError> {
        if !self.badges_registered {
            for w in self.workers.iter().filter(|w| w.badge) {
                gateway.register_badge(&w.worker_id)?;
            }
            self.badges_registered = true;
        }

        let mut summary = WorkSummary::default();
        let mut order: Vec<usize> = (0..self.workers.len()).collect();
        loop {
            let mut progressed = false;
            order.shuffle(&mut self.rng);
            for &w in &order {
                if self.blocked[w] {
                    continue;
                }
                if cap.exhausted() {
                    return Ok(summary);
                }
                let task = match gateway.next_task(&self.workers[w].worker_id) {
                    Ok(Some(task)) => task,
                    Ok(None) => continue,
                    Err(GatewayError::Forbidden) => {
                        self.blocked[w] = true;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let billable = task.kind == TaskKind::Screening;
                for item in &task.items {
                    if billable && cap.exhausted() {
                        return Ok(summary);
                    }
                    let truth = self.truth.label(&item.paper_id, &task.criterion_id);
                    let accuracy = self.accuracy(w, &task.criterion_id);
                    let label = self.workers[w].answer(truth, accuracy, &mut self.rng);
                    let vote = VoteSubmission {
                        assignment_id: task.assignment_id.clone(),
                        worker_id: self.workers[w].worker_id.clone(),
                        paper_id: item.paper_id.clone(),
                        criterion_id: task.criterion_id.clone(),
                        label,
                    };
                    match gateway.submit_vote(&vote) {
                        Ok(()) => {
                            progressed = true;
                            summary.votes += 1;
                            if billable {
                                summary.billable += 1;
                                cap.spend();
                            }
                        }
                        Err(GatewayError::Forbidden) => {
                            self.blocked[w] = true;
                            break;
                        }
                        // Someone else served the request first, or the pair was decided meanwhile.
                        Err(GatewayError::Conflict(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            if !progressed {
                return Ok(summary);
            }
        }
    }
}
