//! Task assignment: which criterion a worker works on and which papers it sees.

use serde::{Deserialize, Serialize};

use super::ScreeningProject;
use crate::crowdsim::QualificationState;
use crate::domain::{CriterionId, PaperId, Phase, WorkerId};
use crate::error::VoteError;
use crate::seed::stable_key;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Entry test on test items; not paid.
    Qualification,
    Screening,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperPayload {
    pub paper_id: PaperId,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

/// Shown before the items: the criterion with one paper it applies to and one it does not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingScreen {
    pub criterion_id: CriterionId,
    pub criterion_text: String,
    pub positive_example: PaperPayload,
    pub negative_example: PaperPayload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub assignment_id: String,
    pub worker_id: WorkerId,
    pub criterion_id: CriterionId,
    pub kind: TaskKind,
    pub training: TrainingScreen,
    pub items: Vec<PaperPayload>,
}

impl TaskAssignment {
    /// Worker encoded in an assignment id of the form `<sequence>-<worker>`.
    pub fn worker_from_id(assignment_id: &str) -> Option<WorkerId> {
        let (seq, worker) = assignment_id.split_once('-')?;
        if seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) || worker.is_empty() {
            return None;
        }
        Some(WorkerId::from(worker))
    }
}

impl ScreeningProject {
    fn payload(&self, paper: &PaperId) -> PaperPayload {
        let p = self
            .inputs
            .papers
            .iter()
            .find(|p| &p.id == paper)
            .expect("known paper");
        PaperPayload {
            paper_id: p.id.clone(),
            title: p.title.clone(),
            abstract_text: p.abstract_text.clone(),
        }
    }

    fn training_screen(&self, criterion: &CriterionId) -> TrainingScreen {
        let c = self
            .inputs
            .criteria
            .iter()
            .find(|c| &c.id == criterion)
            .expect("known criterion");
        TrainingScreen {
            criterion_id: c.id.clone(),
            criterion_text: c.text.clone(),
            positive_example: self.payload(&c.positive_example),
            negative_example: self.payload(&c.negative_example),
        }
    }

    /// Pending pairs of a criterion the worker may still vote on, in paper order.
    fn eligible_candidates(&self, worker: &WorkerId, criterion: &CriterionId) -> Vec<PaperId> {
        let ledger = self.workers.get(worker);
        self.pending
            .iter()
            .filter(|(_, row)| row.get(criterion).is_some_and(|&n| n > 0))
            .map(|(p, _)| p)
            .filter(|p| ledger.is_none_or(|l| !l.has_voted(p, criterion)))
            .cloned()
            .collect()
    }

    /// Test items of a criterion the worker has not answered, in a
    /// worker-specific order so that workers do not all see the same ones.
    fn unseen_test_items(&self, worker: &WorkerId, criterion: &CriterionId) -> Vec<PaperId> {
        let ledger = self.workers.get(worker);
        let mut items: Vec<PaperId> = self
            .test_items_for(criterion)
            .into_iter()
            .filter(|p| ledger.is_none_or(|l| !l.has_voted(p, criterion)))
            .cloned()
            .collect();
        items.sort_by_key(|p| (stable_key(&[worker.as_str(), criterion.as_str(), p.as_str()]), p.clone()));
        items
    }

    /// Least-loaded criterion among `candidates`, ties by id. Load is the
    /// number of active workers currently bound to the criterion.
    fn least_loaded(&self, worker: &WorkerId, candidates: &[&CriterionId]) -> Option<CriterionId> {
        let load = self.criterion_load();
        let own = self.workers.get(worker).and_then(|l| l.bound_criterion.as_ref());
        candidates
            .iter()
            .min_by_key(|c| {
                let n = load.get(**c).copied().unwrap_or(0);
                let n = if own == Some(**c) { n.saturating_sub(1) } else { n };
                (n, (**c).clone())
            })
            .map(|c| (*c).clone())
    }

    fn assignment_id(&self, worker: &WorkerId) -> String {
        format!("{}-{}", self.last_sequence_no(), worker)
    }

    /// The next task for a worker, or `None` when there is nothing it may do.
    /// Computed from state alone; fetching a task changes nothing.
    pub fn next_task(&self, worker: &WorkerId) -> Result<Option<TaskAssignment>, VoteError> {
        if !matches!(self.phase, Phase::InitialRun | Phase::Adaptive) {
            return Ok(None);
        }
        let ledger = self.workers.get(worker);
        if ledger.is_some_and(|l| l.is_blocked()) {
            return Err(VoteError::Forbidden(worker.clone()));
        }
        let active: Vec<&CriterionId> = self
            .inputs
            .criteria
            .iter()
            .map(|c| &c.id)
            .filter(|c| !self.is_given_up(c))
            .collect();

        if !ledger.is_some_and(|l| l.is_qualified()) {
            return Ok(self.qualification_task(worker, &active));
        }
        let ledger = ledger.expect("qualified workers have a ledger");

        let with_work: Vec<&CriterionId> = active
            .iter()
            .copied()
            .filter(|c| !self.eligible_candidates(worker, c).is_empty())
            .collect();
        let criterion = match &ledger.bound_criterion {
            Some(c) if with_work.contains(&c) => c.clone(),
            _ => match self.least_loaded(worker, &with_work) {
                Some(c) => c,
                None => return Ok(None),
            },
        };

        let size = self.config.quality.task_size as usize;
        let interval = self.config.quality.honeypot_interval;
        let mut candidates = self.eligible_candidates(worker, &criterion).into_iter();
        let mut honeypots = self
            .unseen_test_items(worker, &criterion)
            .into_iter()
            .filter(|p| self.pending_for(p, &criterion) == 0);
        let mut since = ledger.items_since_honeypot;
        let mut items = Vec::with_capacity(size);
        while items.len() < size {
            let due = self.phase == Phase::Adaptive && since + 1 >= interval;
            let next = if due {
                match honeypots.next() {
                    Some(p) => {
                        since = 0;
                        Some(p)
                    }
                    None => candidates.next().inspect(|_| since += 1),
                }
            } else {
                candidates.next().inspect(|_| since += 1)
            };
            match next {
                Some(p) => items.push(self.payload(&p)),
                None => break,
            }
        }
        Ok(Some(TaskAssignment {
            assignment_id: self.assignment_id(worker),
            worker_id: worker.clone(),
            training: self.training_screen(&criterion),
            criterion_id: criterion,
            kind: TaskKind::Screening,
            items,
        }))
    }

    /// Entry test on the criterion the worker will be bound to. Offered only
    /// while that criterion has pending work.
    fn qualification_task(&self, worker: &WorkerId, active: &[&CriterionId]) -> Option<TaskAssignment> {
        let needed = self.config.quality.qualification_questions as usize;
        let (criterion, remaining) = match self.workers.get(worker).map(|l| &l.qualification) {
            Some(QualificationState::InProgress { criterion_id, answers }) => {
                if !active.contains(&criterion_id) {
                    return None;
                }
                (criterion_id.clone(), needed.saturating_sub(answers.len()))
            }
            _ => {
                let open: Vec<&CriterionId> = active
                    .iter()
                    .copied()
                    .filter(|c| {
                        !self.eligible_candidates(worker, c).is_empty()
                            && self.unseen_test_items(worker, c).len() >= needed
                    })
                    .collect();
                (self.least_loaded(worker, &open)?, needed)
            }
        };
        let items: Vec<PaperPayload> = self
            .unseen_test_items(worker, &criterion)
            .iter()
            .take(remaining)
            .map(|p| self.payload(p))
            .collect();
        if items.is_empty() {
            return None;
        }
        Some(TaskAssignment {
            assignment_id: self.assignment_id(worker),
            worker_id: worker.clone(),
            training: self.training_screen(&criterion),
            criterion_id: criterion,
            kind: TaskKind::Qualification,
            items,
        })
    }
}
