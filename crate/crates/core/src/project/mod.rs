//! The screening project aggregate.
//!
//! All state changes go through a handful of commands (`start_initial_run`,
//! `step`, `stop`, `register_worker`) and vote ingestion. Every change is a
//! deterministic function of the current state and its input, so replaying
//! the vote log on top of a snapshot reproduces the state exactly.

mod report;
mod tasks;

pub use report::{PaperCounts, StatusReport};
pub use tasks::{PaperPayload, TaskAssignment, TaskKind, TrainingScreen};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aggregation::majority_label;
use crate::bayes::{self, CriterionEvidence, Decision, DecisionRule};
use crate::config::ProjectConfig;
use crate::crowdsim::{CrowdGateway, GatewayError, QualificationState, VoteSubmission, WorkerLedger};
use crate::domain::{
    Cents, CriterionId, Label, PaperId, PaperState, PaperStatus, Phase, ProjectInputs, Vote, VoteKind, VoteRequest,
    WorkerId,
};
use crate::error::{DomainError, StateError, ValidationError, VoteError};
use crate::strategy::{
    self, clamp_accuracy, estimate_raw_accuracy, estimate_selectivity, CriterionStats, GiveUpEvent, PairScore,
    VoteCounts,
};

/// Graded test-item answers for one criterion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyEvidence {
    pub correct: u64,
    pub total: u64,
}

impl AccuracyEvidence {
    fn record(&mut self, correct: bool) {
        self.total += 1;
        if correct {
            self.correct += 1;
        }
    }
}

/// Activity feed entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProjectEvent {
    PhaseChanged {
        from: Phase,
        to: Phase,
        at_sequence: u64,
    },
    Decided {
        paper_id: PaperId,
        decision: Decision,
        p_out: f64,
        /// Pair posteriors the decision was taken on, in criterion order.
        posteriors: Vec<(CriterionId, f64)>,
        at_sequence: u64,
    },
    GaveUp {
        give_up: GiveUpEvent,
        at_sequence: u64,
    },
    WorkerExcluded {
        worker_id: WorkerId,
        at_sequence: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningProject {
    id: String,
    inputs: ProjectInputs,
    config: ProjectConfig,
    phase: Phase,
    seed: Option<u64>,
    votes: Vec<Vote>,
    counts: BTreeMap<PaperId, BTreeMap<CriterionId, VoteCounts>>,
    paper_states: BTreeMap<PaperId, PaperState>,
    stats: BTreeMap<CriterionId, CriterionStats>,
    evidence: BTreeMap<CriterionId, AccuracyEvidence>,
    initial_sample: Vec<PaperId>,
    pending: BTreeMap<PaperId, BTreeMap<CriterionId, u32>>,
    workers: BTreeMap<WorkerId, WorkerLedger>,
    gold: BTreeMap<PaperId, BTreeMap<CriterionId, bool>>,
    billable_votes: u64,
    steps: u64,
    events: Vec<ProjectEvent>,
}

impl ScreeningProject {
    /// Builds a project in phase `setup` with no votes and nothing spent.
    pub fn create(id: impl Into<String>, inputs: ProjectInputs, config: ProjectConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        let id = id.into();
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '/') {
            return Err(ValidationError::Config(format!("invalid project id {id:?}")));
        }
        let gold = inputs
            .test_items
            .iter()
            .map(|t| (t.paper_id.clone(), t.labels.clone()))
            .collect();
        let mut project = Self {
            id,
            inputs,
            config,
            phase: Phase::Setup,
            seed: None,
            votes: Vec::new(),
            counts: BTreeMap::new(),
            paper_states: BTreeMap::new(),
            stats: BTreeMap::new(),
            evidence: BTreeMap::new(),
            initial_sample: Vec::new(),
            pending: BTreeMap::new(),
            workers: BTreeMap::new(),
            gold,
            billable_votes: 0,
            steps: 0,
            events: Vec::new(),
        };
        for paper in &project.inputs.papers {
            project.counts.insert(
                paper.id.clone(),
                project.inputs.criteria.iter().map(|c| (c.id.clone(), VoteCounts::default())).collect(),
            );
        }
        for c in &project.inputs.criteria {
            project.evidence.insert(c.id.clone(), AccuracyEvidence::default());
        }
        let states = project
            .inputs
            .papers
            .iter()
            .map(|p| {
                let p_out = project.exclusion_probability(&p.id);
                (
                    p.id.clone(),
                    PaperState {
                        paper_id: p.id.clone(),
                        status: PaperStatus::Undecided,
                        exclusion_probability: p_out,
                    },
                )
            })
            .collect();
        project.paper_states = states;
        Ok(project)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn inputs(&self) -> &ProjectInputs {
        &self.inputs
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn vote_log(&self) -> &[Vote] {
        &self.votes
    }

    pub fn last_sequence_no(&self) -> u64 {
        self.votes.len() as u64
    }

    pub fn billable_votes(&self) -> u64 {
        self.billable_votes
    }

    pub fn budget_spent(&self) -> Cents {
        self.config.strategy.price_per_vote * self.billable_votes
    }

    pub fn events(&self) -> &[ProjectEvent] {
        &self.events
    }

    pub fn paper_state(&self, paper: &PaperId) -> Option<&PaperState> {
        self.paper_states.get(paper)
    }

    pub fn paper_states(&self) -> impl Iterator<Item = &PaperState> {
        self.inputs.papers.iter().map(move |p| &self.paper_states[&p.id])
    }

    /// Current criterion statistics; empty until the initial run completes.
    pub fn criterion_stats(&self) -> &BTreeMap<CriterionId, CriterionStats> {
        &self.stats
    }

    pub fn pending_requests(&self) -> u64 {
        self.pending.values().flat_map(|row| row.values()).map(|&n| u64::from(n)).sum()
    }

    pub fn worker(&self, worker: &WorkerId) -> Option<&WorkerLedger> {
        self.workers.get(worker)
    }

    pub fn initial_sample(&self) -> &[PaperId] {
        &self.initial_sample
    }

    pub fn vote_counts(&self, paper: &PaperId, criterion: &CriterionId) -> VoteCounts {
        self.counts
            .get(paper)
            .and_then(|row| row.get(criterion))
            .copied()
            .unwrap_or_default()
    }

    pub fn paper_votes(&self, paper: &PaperId) -> u32 {
        self.counts
            .get(paper)
            .map(|row| row.values().map(VoteCounts::total).sum())
            .unwrap_or(0)
    }

    /// Prior and accuracy in force for a criterion: the estimates once the
    /// initial run is done, the configured historical values before.
    fn working_stats(&self, criterion: &CriterionId) -> (f64, f64) {
        match self.stats.get(criterion) {
            Some(s) => (s.selectivity, s.accuracy),
            None => (
                self.config.historical.historical_selectivity,
                clamp_accuracy(self.config.historical.historical_accuracy),
            ),
        }
    }

    fn is_given_up(&self, criterion: &CriterionId) -> bool {
        self.stats.get(criterion).is_some_and(|s| s.given_up)
    }

    pub fn posterior(&self, paper: &PaperId, criterion: &CriterionId) -> f64 {
        let (prior, accuracy) = self.working_stats(criterion);
        let counts = self.vote_counts(paper, criterion);
        bayes::pair_posterior(prior, accuracy, counts.out_votes, counts.in_votes)
            .expect("selectivity in (0,1) and accuracy clamped to [0.55,0.99]")
    }

    fn exclusion_probability(&self, paper: &PaperId) -> f64 {
        let posteriors: Vec<f64> = self.inputs.criteria.iter().map(|c| self.posterior(paper, &c.id)).collect();
        bayes::paper_exclusion_probability(&posteriors).expect("at least one criterion")
    }

    fn decision_rule(&self) -> DecisionRule {
        let s = &self.config.strategy;
        DecisionRule {
            theta_out: s.theta_out,
            theta_in: s.theta_in,
            min_votes_for_include: s.min_votes_for_include,
        }
    }

    fn evaluate(&self, paper: &PaperId) -> (Decision, f64, Vec<(CriterionId, f64)>) {
        let posteriors: Vec<(CriterionId, f64)> = self
            .inputs
            .criteria
            .iter()
            .map(|c| (c.id.clone(), self.posterior(paper, &c.id)))
            .collect();
        let evidence: Vec<CriterionEvidence<'_>> = posteriors
            .iter()
            .map(|(c, p)| CriterionEvidence {
                criterion_id: c,
                posterior: *p,
                votes: self.vote_counts(paper, c).total(),
                given_up: self.is_given_up(c),
            })
            .collect();
        let (decision, p_out) = bayes::decide(&evidence, &self.decision_rule()).expect("non-empty evidence");
        (decision, p_out, posteriors)
    }

    /// Decision rule applied to one undecided paper, without side effects.
    pub fn decide_paper(&self, paper: &PaperId) -> Result<Decision, StateError> {
        let state = self
            .paper_states
            .get(paper)
            .ok_or_else(|| StateError::UnknownPaper(paper.clone()))?;
        if state.status.is_terminal() {
            return Err(StateError::PaperDecided(paper.clone()));
        }
        Ok(self.evaluate(paper).0)
    }

    fn set_phase(&mut self, to: Phase) {
        if to != self.phase {
            debug_assert!(to > self.phase, "phase moves forward only");
            self.events.push(ProjectEvent::PhaseChanged {
                from: self.phase,
                to,
                at_sequence: self.last_sequence_no(),
            });
            self.phase = to;
        }
    }

    fn cancel_pending_for_paper(&mut self, paper: &PaperId) {
        self.pending.remove(paper);
    }

    fn cancel_pending_for_criterion(&mut self, criterion: &CriterionId) {
        for row in self.pending.values_mut() {
            row.remove(criterion);
        }
        self.pending.retain(|_, row| !row.is_empty());
    }

    fn add_pending(&mut self, requests: &[VoteRequest]) {
        for r in requests {
            *self
                .pending
                .entry(r.paper_id.clone())
                .or_default()
                .entry(r.criterion_id.clone())
                .or_insert(0) += 1;
        }
    }

    pub fn pending_for(&self, paper: &PaperId, criterion: &CriterionId) -> u32 {
        self.pending
            .get(paper)
            .and_then(|row| row.get(criterion))
            .copied()
            .unwrap_or(0)
    }

    /// Registers a badge holder, who skips the entry test.
    pub fn register_worker(&mut self, worker: WorkerId, badge: bool) -> Result<(), StateError> {
        if self.phase == Phase::Finished {
            return Err(StateError::Phase {
                op: "register_worker",
                phase: self.phase,
            });
        }
        let ledger = self.workers.entry(worker).or_insert_with(|| WorkerLedger::new(badge));
        if badge && matches!(ledger.qualification, QualificationState::Untested) {
            ledger.badge = true;
            ledger.qualification = QualificationState::Bypassed;
        }
        Ok(())
    }

    /// Samples the initial-run papers and queues their vote requests.
    pub fn start_initial_run(&mut self, seed: u64) -> Result<Vec<VoteRequest>, StateError> {
        if self.phase != Phase::Setup {
            return Err(StateError::Phase {
                op: "initial_run",
                phase: self.phase,
            });
        }
        let papers: Vec<PaperId> = self.inputs.papers.iter().map(|p| p.id.clone()).collect();
        let criteria: Vec<CriterionId> = self.inputs.criteria.iter().map(|c| c.id.clone()).collect();
        let (sample, requests) = strategy::plan_initial_run(&papers, &criteria, &self.config.strategy, seed);
        self.seed = Some(seed);
        self.initial_sample = sample;
        self.add_pending(&requests);
        self.set_phase(Phase::InitialRun);
        if requests.is_empty() {
            self.complete_initial_run();
        }
        Ok(requests)
    }

    /// Criterion statistics from the initial run and all graded answers so far.
    ///
    /// Selectivity is the Laplace-smoothed share of initial-run papers whose
    /// majority vote says the criterion applies; accuracy is the smoothed
    /// share of correct test-item answers, clamped.
    pub fn estimate_criterion_stats(&self) -> Result<BTreeMap<CriterionId, CriterionStats>, StateError> {
        match self.phase {
            Phase::Setup => {
                return Err(StateError::Phase {
                    op: "estimate_criterion_stats",
                    phase: self.phase,
                })
            }
            Phase::InitialRun => return Err(StateError::InitialRunIncomplete),
            _ => {}
        }
        Ok(self.compute_stats())
    }

    fn compute_stats(&self) -> BTreeMap<CriterionId, CriterionStats> {
        let by_pair = self.candidate_labels();
        self.inputs
            .criteria
            .iter()
            .map(|c| {
                let applies = self
                    .initial_sample
                    .iter()
                    .filter(|p| {
                        by_pair
                            .get(&((*p).clone(), c.id.clone()))
                            .and_then(|labels| majority_label(labels).ok())
                            == Some(Label::Applies)
                    })
                    .count();
                let selectivity = estimate_selectivity(applies, self.initial_sample.len());
                let ev = self.evidence[&c.id];
                let raw = estimate_raw_accuracy(ev.correct, ev.total);
                let stats = CriterionStats {
                    criterion_id: c.id.clone(),
                    selectivity,
                    accuracy: clamp_accuracy(raw),
                    raw_accuracy: raw,
                    given_up: self.is_given_up(&c.id),
                };
                (c.id.clone(), stats)
            })
            .collect()
    }

    fn candidate_labels(&self) -> BTreeMap<(PaperId, CriterionId), Vec<Label>> {
        let mut map: BTreeMap<(PaperId, CriterionId), Vec<Label>> = BTreeMap::new();
        for v in self.votes.iter().filter(|v| v.kind == VoteKind::Candidate) {
            map.entry((v.paper_id.clone(), v.criterion_id.clone())).or_default().push(v.label);
        }
        map
    }

    fn complete_initial_run(&mut self) {
        self.stats = self.compute_stats();
        self.set_phase(Phase::Adaptive);
        self.settle();
    }

    fn refresh_accuracy(&mut self, criterion: &CriterionId) {
        let ev = self.evidence[criterion];
        if let Some(stats) = self.stats.get_mut(criterion) {
            let raw = estimate_raw_accuracy(ev.correct, ev.total);
            stats.raw_accuracy = raw;
            stats.accuracy = clamp_accuracy(raw);
        }
    }

    /// Decides every undecided paper that the rule allows, then runs the
    /// give-up rules, repeating while criteria get given up.
    fn settle(&mut self) {
        if self.phase != Phase::Adaptive {
            return;
        }
        loop {
            self.decide_all();
            let events = self.apply_give_up();
            let criterion_given_up = events.iter().any(|e| matches!(e, GiveUpEvent::Criterion { .. }));
            if self.phase != Phase::Adaptive || !criterion_given_up {
                break;
            }
        }
        if self.phase == Phase::Adaptive && self.paper_states.values().all(|s| s.status.is_terminal()) {
            self.pending.clear();
            self.set_phase(Phase::Finished);
        }
    }

    fn decide_all(&mut self) {
        let undecided: Vec<PaperId> = self
            .inputs
            .papers
            .iter()
            .filter(|p| !self.paper_states[&p.id].status.is_terminal())
            .map(|p| p.id.clone())
            .collect();
        let at_sequence = self.last_sequence_no();
        for paper in undecided {
            let (decision, p_out, posteriors) = self.evaluate(&paper);
            let status = match &decision {
                Decision::ScreenOut(c) => PaperStatus::ScreenedOut(c.clone()),
                Decision::Include => PaperStatus::Included,
                Decision::None => {
                    self.paper_states.get_mut(&paper).expect("known paper").exclusion_probability = p_out;
                    continue;
                }
            };
            let state = self.paper_states.get_mut(&paper).expect("known paper");
            state.status = status;
            state.exclusion_probability = p_out;
            self.cancel_pending_for_paper(&paper);
            self.events.push(ProjectEvent::Decided {
                paper_id: paper,
                decision,
                p_out,
                posteriors,
                at_sequence,
            });
        }
    }

    /// Give-up rules, in order: papers at the vote cap, criteria the crowd
    /// cannot judge, then the whole project when too many criteria are gone.
    pub fn apply_give_up(&mut self) -> Vec<GiveUpEvent> {
        if self.phase != Phase::Adaptive {
            return Vec::new();
        }
        let cfg = self.config.strategy.clone();
        let mut events = Vec::new();

        let mut capped: Vec<(PaperId, u32)> = self
            .paper_states
            .values()
            .filter(|s| !s.status.is_terminal())
            .map(|s| (s.paper_id.clone(), self.paper_votes(&s.paper_id)))
            .filter(|(_, votes)| *votes >= cfg.give_up_votes_per_paper)
            .collect();
        capped.sort();
        for (paper, votes) in capped {
            self.paper_states.get_mut(&paper).expect("known paper").status = PaperStatus::GivenUp;
            self.cancel_pending_for_paper(&paper);
            events.push(GiveUpEvent::Paper { paper_id: paper, votes });
        }

        let hard: Vec<CriterionId> = self
            .stats
            .values()
            .filter(|s| !s.given_up && s.raw_accuracy < cfg.give_up_min_accuracy)
            .map(|s| s.criterion_id.clone())
            .collect();
        for criterion in hard {
            self.stats.get_mut(&criterion).expect("known criterion").given_up = true;
            self.cancel_pending_for_criterion(&criterion);
            events.push(GiveUpEvent::Criterion { criterion_id: criterion });
        }

        let given_up = self.stats.values().filter(|s| s.given_up).count();
        let total = self.inputs.criteria.len();
        if strategy::project_gives_up(given_up, total, &cfg) {
            events.push(GiveUpEvent::Project {
                given_up_criteria: given_up,
                criteria: total,
            });
            self.record_give_ups(&events);
            let leftovers = self.finish();
            return events.into_iter().chain(leftovers).collect();
        }
        self.record_give_ups(&events);
        events
    }

    fn record_give_ups(&mut self, events: &[GiveUpEvent]) {
        let at_sequence = self.last_sequence_no();
        for e in events {
            self.events.push(ProjectEvent::GaveUp {
                give_up: e.clone(),
                at_sequence,
            });
        }
    }

    /// Moves to `finished`, handing every undecided paper back to the authors.
    fn finish(&mut self) -> Vec<GiveUpEvent> {
        let mut leftovers = Vec::new();
        for state in self.paper_states.values_mut() {
            if !state.status.is_terminal() {
                state.status = PaperStatus::GivenUp;
                leftovers.push(GiveUpEvent::Paper {
                    paper_id: state.paper_id.clone(),
                    votes: 0,
                });
            }
        }
        for e in leftovers.iter_mut() {
            if let GiveUpEvent::Paper { paper_id, votes } = e {
                *votes = self.paper_votes(paper_id);
            }
        }
        self.record_give_ups(&leftovers);
        self.pending.clear();
        self.set_phase(Phase::Finished);
        leftovers
    }

    /// Scores every queryable pair and orders them best first.
    pub fn rank_pairs(&self) -> Vec<PairScore> {
        if self.phase != Phase::Adaptive {
            return Vec::new();
        }
        let mut scores = Vec::new();
        for paper in &self.inputs.papers {
            if self.paper_states[&paper.id].status.is_terminal() {
                continue;
            }
            for c in &self.inputs.criteria {
                let Some(stats) = self.stats.get(&c.id) else { continue };
                if stats.given_up {
                    continue;
                }
                let counts = self.vote_counts(&paper.id, &c.id);
                if let Some(score) =
                    strategy::decision_run_probability(&paper.id, &c.id, counts, stats, &self.config.strategy)
                        .expect("valid stats")
                {
                    scores.push(score);
                }
            }
        }
        strategy::sort_scores(&mut scores);
        scores
    }

    /// Queues up to `vote_budget` requests on the best-ranked pairs, one per
    /// pair per pass. Finishes the project when nothing is left to query.
    pub fn step(&mut self, vote_budget: u64) -> Result<Vec<VoteRequest>, StateError> {
        if vote_budget == 0 {
            return Err(DomainError::Invalid("vote_budget must be at least 1".into()).into());
        }
        if self.phase != Phase::Adaptive {
            return Err(StateError::Phase {
                op: "step",
                phase: self.phase,
            });
        }
        let ranked: Vec<VoteRequest> = self
            .rank_pairs()
            .into_iter()
            .map(|s| VoteRequest::new(s.paper_id, s.criterion_id))
            .collect();
        if ranked.is_empty() {
            self.finish();
            return Ok(Vec::new());
        }
        let requests = strategy::cycle_requests(&ranked, usize::try_from(vote_budget).unwrap_or(usize::MAX));
        self.add_pending(&requests);
        self.steps += 1;
        Ok(requests)
    }

    /// Ends the screening at the authors' request.
    pub fn stop(&mut self) -> Result<Vec<GiveUpEvent>, StateError> {
        if self.phase == Phase::Finished {
            return Err(StateError::Phase {
                op: "stop",
                phase: self.phase,
            });
        }
        Ok(self.finish())
    }

    fn gold_label(&self, paper: &PaperId, criterion: &CriterionId) -> Option<bool> {
        self.gold.get(paper).and_then(|row| row.get(criterion)).copied()
    }

    /// Classifies a submission without changing state.
    pub fn check_vote(&self, sub: &VoteSubmission) -> Result<VoteKind, VoteError> {
        if !matches!(self.phase, Phase::InitialRun | Phase::Adaptive) {
            return Err(VoteError::Phase(self.phase));
        }
        if !self.paper_states.contains_key(&sub.paper_id) {
            return Err(VoteError::UnknownPaper(sub.paper_id.clone()));
        }
        if !self.evidence.contains_key(&sub.criterion_id) {
            return Err(VoteError::UnknownCriterion(sub.criterion_id.clone()));
        }
        let fresh;
        let ledger = match self.workers.get(&sub.worker_id) {
            Some(l) => l,
            None => {
                fresh = WorkerLedger::new(false);
                &fresh
            }
        };
        if ledger.is_blocked() {
            return Err(VoteError::Forbidden(sub.worker_id.clone()));
        }
        if ledger.has_voted(&sub.paper_id, &sub.criterion_id) {
            return Err(VoteError::Duplicate {
                worker: sub.worker_id.clone(),
                paper: sub.paper_id.clone(),
                criterion: sub.criterion_id.clone(),
            });
        }
        let not_requested = || VoteError::NotRequested {
            paper: sub.paper_id.clone(),
            criterion: sub.criterion_id.clone(),
        };
        let is_test = self.gold_label(&sub.paper_id, &sub.criterion_id).is_some();
        if !ledger.is_qualified() {
            if let QualificationState::InProgress { criterion_id, .. } = &ledger.qualification {
                if criterion_id != &sub.criterion_id {
                    return Err(not_requested());
                }
            }
            return if is_test && !self.is_given_up(&sub.criterion_id) {
                Ok(VoteKind::Qualification)
            } else {
                Err(not_requested())
            };
        }
        if self.pending_for(&sub.paper_id, &sub.criterion_id) > 0 {
            Ok(VoteKind::Candidate)
        } else if self.phase == Phase::Adaptive && is_test && !self.is_given_up(&sub.criterion_id) {
            Ok(VoteKind::Honeypot)
        } else {
            Err(not_requested())
        }
    }

    /// Validates a submission and assigns it the next sequence number,
    /// without applying it.
    pub fn prepare_vote(&self, sub: &VoteSubmission) -> Result<Vote, VoteError> {
        let kind = self.check_vote(sub)?;
        Ok(Vote {
            sequence_no: self.last_sequence_no() + 1,
            worker_id: sub.worker_id.clone(),
            paper_id: sub.paper_id.clone(),
            criterion_id: sub.criterion_id.clone(),
            label: sub.label,
            kind,
        })
    }

    /// Validates and applies one vote.
    pub fn ingest_vote(&mut self, sub: &VoteSubmission) -> Result<Vote, VoteError> {
        let vote = self.prepare_vote(sub)?;
        self.apply(vote.clone());
        Ok(vote)
    }

    /// Re-applies a logged vote during recovery. The vote must be the next in
    /// sequence and classify exactly as it did when first ingested.
    pub fn replay_vote(&mut self, vote: &Vote) -> Result<(), VoteError> {
        let sub = VoteSubmission {
            assignment_id: String::new(),
            worker_id: vote.worker_id.clone(),
            paper_id: vote.paper_id.clone(),
            criterion_id: vote.criterion_id.clone(),
            label: vote.label,
        };
        let replay_err = |reason: String| VoteError::Replay {
            sequence_no: vote.sequence_no,
            reason,
        };
        if vote.sequence_no != self.last_sequence_no() + 1 {
            return Err(replay_err(format!("expected sequence {}", self.last_sequence_no() + 1)));
        }
        let kind = self.check_vote(&sub).map_err(|e| replay_err(e.to_string()))?;
        if kind != vote.kind {
            return Err(replay_err(format!("classified as {kind:?}, logged as {:?}", vote.kind)));
        }
        self.apply(vote.clone());
        Ok(())
    }

    fn apply(&mut self, vote: Vote) {
        let rules = self.config.quality.clone();
        let gold = self.gold_label(&vote.paper_id, &vote.criterion_id);
        let correct = gold.map(|g| g == vote.label.applies());
        let ledger = self.workers.entry(vote.worker_id.clone()).or_insert_with(|| WorkerLedger::new(false));
        ledger.voted.insert((vote.paper_id.clone(), vote.criterion_id.clone()));
        ledger.bound_criterion = Some(vote.criterion_id.clone());
        let mut evidence_changed = false;
        let mut newly_excluded = false;

        match vote.kind {
            VoteKind::Qualification => {
                let correct = correct.expect("qualification answers are on test items");
                ledger.record_qualification(&vote.criterion_id, correct, &rules);
                self.evidence.get_mut(&vote.criterion_id).expect("known criterion").record(correct);
                evidence_changed = true;
            }
            VoteKind::Honeypot => {
                let correct = correct.expect("honeypots are test items");
                newly_excluded = ledger.record_honeypot(&vote.criterion_id, correct, &rules);
                self.evidence.get_mut(&vote.criterion_id).expect("known criterion").record(correct);
                evidence_changed = true;
            }
            VoteKind::Candidate => {
                ledger.items_since_honeypot += 1;
                if let Some(correct) = correct {
                    self.evidence.get_mut(&vote.criterion_id).expect("known criterion").record(correct);
                    evidence_changed = true;
                }
                let row = self.pending.get_mut(&vote.paper_id).expect("pending request");
                let left = row.get_mut(&vote.criterion_id).expect("pending request");
                *left -= 1;
                if *left == 0 {
                    row.remove(&vote.criterion_id);
                    if row.is_empty() {
                        self.pending.remove(&vote.paper_id);
                    }
                }
                let counts = self
                    .counts
                    .get_mut(&vote.paper_id)
                    .and_then(|row| row.get_mut(&vote.criterion_id))
                    .expect("known pair");
                match vote.label {
                    Label::Applies => counts.out_votes += 1,
                    Label::NotApplies => counts.in_votes += 1,
                }
            }
        }
        if vote.kind.billable() {
            self.billable_votes += 1;
        }
        let sequence_no = vote.sequence_no;
        let worker_id = vote.worker_id.clone();
        let criterion = vote.criterion_id.clone();
        self.votes.push(vote);
        if newly_excluded {
            self.events.push(ProjectEvent::WorkerExcluded {
                worker_id,
                at_sequence: sequence_no,
            });
        }

        match self.phase {
            Phase::InitialRun => {
                if self.pending.is_empty() {
                    self.complete_initial_run();
                }
            }
            Phase::Adaptive => {
                if evidence_changed {
                    self.refresh_accuracy(&criterion);
                }
                self.settle();
            }
            _ => {}
        }
    }

    fn criterion_load(&self) -> BTreeMap<&CriterionId, usize> {
        let mut load: BTreeMap<&CriterionId, usize> = self.inputs.criteria.iter().map(|c| (&c.id, 0)).collect();
        for ledger in self.workers.values().filter(|l| !l.is_blocked()) {
            if let Some(c) = &ledger.bound_criterion {
                if let Some(n) = load.get_mut(c) {
                    *n += 1;
                }
            }
        }
        load
    }

    /// Ids of the test items labelled for a criterion.
    fn test_items_for(&self, criterion: &CriterionId) -> Vec<&PaperId> {
        self.inputs
            .test_items
            .iter()
            .filter(|t| t.labels.contains_key(criterion))
            .map(|t| &t.paper_id)
            .collect()
    }

    #[doc(hidden)]
    pub fn voted_pairs(&self) -> BTreeSet<(WorkerId, PaperId, CriterionId)> {
        self.votes
            .iter()
            .map(|v| (v.worker_id.clone(), v.paper_id.clone(), v.criterion_id.clone()))
            .collect()
    }
}

/// In-process gateway used by the offline simulator and Monte Carlo trials.
impl CrowdGateway for ScreeningProject {
    fn register_badge(&mut self, worker: &WorkerId) -> Result<(), GatewayError> {
        self.register_worker(worker.clone(), true)
            .map_err(|e| GatewayError::Conflict(e.to_string()))
    }

    fn next_task(&mut self, worker: &WorkerId) -> Result<Option<TaskAssignment>, GatewayError> {
        ScreeningProject::next_task(self, worker).map_err(GatewayError::from)
    }

    fn submit_vote(&mut self, vote: &VoteSubmission) -> Result<(), GatewayError> {
        self.ingest_vote(vote).map(|_| ()).map_err(GatewayError::from)
    }
}

impl From<VoteError> for GatewayError {
    fn from(e: VoteError) -> Self {
        match e {
            VoteError::Forbidden(_) => GatewayError::Forbidden,
            other => GatewayError::Conflict(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests;
