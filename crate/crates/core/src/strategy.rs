//! Shortest Run allocation: criterion statistics, pair scoring, ranking,
//! initial-run planning and give-up rules.
//!
//! The functions here are pure; [`crate::project::ScreeningProject`] feeds
//! them snapshots of its state and applies the results.

use std::cmp::Ordering;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bayes::{pair_posterior, predicted_out_vote_probability};
use crate::domain::{Cents, CriterionId, PaperId, VoteRequest};
use crate::error::{DomainError, ValidationError};
use crate::seed;

pub const ACCURACY_FLOOR: f64 = 0.55;
pub const ACCURACY_CEILING: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub theta_out: f64,
    pub theta_in: f64,
    pub min_votes_for_include: u32,
    /// Look-ahead horizon M for decision-run scoring.
    pub run_horizon: u32,
    pub initial_run_papers: u32,
    pub initial_run_votes_per_pair: u32,
    /// J for the fixed-allocation baseline.
    pub baseline_votes: u32,
    pub price_per_vote: Cents,
    /// N_max: an undecided paper with this many votes is given up.
    pub give_up_votes_per_paper: u32,
    pub give_up_min_accuracy: f64,
    pub give_up_criteria_fraction: f64,
    /// Cost of a false exclusion relative to a false inclusion.
    pub loss_ratio: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            theta_out: 0.99,
            theta_in: 0.01,
            min_votes_for_include: 3,
            run_horizon: 3,
            initial_run_papers: 20,
            initial_run_votes_per_pair: 3,
            baseline_votes: 3,
            price_per_vote: Cents(10),
            give_up_votes_per_paper: 15,
            give_up_min_accuracy: 0.6,
            give_up_criteria_fraction: 0.5,
            loss_ratio: 5.0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let fail = |msg: &str| Err(ValidationError::Config(msg.into()));
        if !(self.theta_out > 0.5 && self.theta_out < 1.0) {
            return fail("theta_out must be in (0.5,1)");
        }
        if !(self.theta_in > 0.0 && self.theta_in < 0.5) {
            return fail("theta_in must be in (0,0.5)");
        }
        let counts = [
            self.min_votes_for_include,
            self.run_horizon,
            self.initial_run_papers,
            self.initial_run_votes_per_pair,
            self.baseline_votes,
            self.give_up_votes_per_paper,
        ];
        if counts.iter().any(|&c| c < 1) {
            return fail("all counts must be at least 1");
        }
        if self.run_horizon > 16 {
            return fail("run_horizon above 16 makes scoring exponential in practice");
        }
        if self.price_per_vote.0 == 0 {
            return fail("price_per_vote must be positive");
        }
        if !(0.0..=1.0).contains(&self.give_up_min_accuracy) {
            return fail("give_up_min_accuracy must be in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.give_up_criteria_fraction) {
            return fail("give_up_criteria_fraction must be in [0,1]");
        }
        if !(self.loss_ratio > 0.0 && self.loss_ratio.is_finite()) {
            return fail("loss_ratio must be positive");
        }
        Ok(())
    }

    pub fn initial_run_cost(&self, papers: usize, criteria: usize) -> Cents {
        let sampled = (self.initial_run_papers as usize).min(papers) as u64;
        self.price_per_vote * (sampled * u64::from(self.initial_run_votes_per_pair) * criteria as u64)
    }
}

/// Estimated selectivity (the prior) and crowd accuracy for one criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionStats {
    pub criterion_id: CriterionId,
    pub selectivity: f64,
    /// Clamped to `[ACCURACY_FLOOR, ACCURACY_CEILING]`.
    pub accuracy: f64,
    /// Laplace estimate before clamping; the give-up rule reads this one.
    pub raw_accuracy: f64,
    pub given_up: bool,
}

/// Laplace-smoothed selectivity from `applies` majority labels among `papers`.
pub fn estimate_selectivity(applies: usize, papers: usize) -> f64 {
    (applies as f64 + 1.0) / (papers as f64 + 2.0)
}

/// Laplace-smoothed accuracy from graded test-item answers, unclamped.
pub fn estimate_raw_accuracy(correct: u64, total: u64) -> f64 {
    (correct as f64 + 1.0) / (total as f64 + 2.0)
}

pub fn clamp_accuracy(raw: f64) -> f64 {
    raw.clamp(ACCURACY_FLOOR, ACCURACY_CEILING)
}

/// Vote counts on one pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub out_votes: u32,
    pub in_votes: u32,
}

impl VoteCounts {
    pub fn total(&self) -> u32 {
        self.out_votes + self.in_votes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub paper_id: PaperId,
    pub criterion_id: CriterionId,
    pub decision_probability: f64,
    pub expected_votes: f64,
    pub score: f64,
}

/// Whether a pair with these counts has already reached a pair-level decision.
///
/// "Out" needs posterior above `theta_out`; "in" needs posterior below
/// `theta_in` and at least `min_votes_for_include` votes, mirroring the
/// paper-level include rule.
pub fn pair_decided(posterior: f64, votes: u32, config: &StrategyConfig) -> bool {
    posterior > config.theta_out || (posterior < config.theta_in && votes >= config.min_votes_for_include)
}

/// Scores a pair by the chance of reaching a decision within `run_horizon`
/// more votes, per expected vote spent.
///
/// Walks every vote sequence of length up to M depth-first; a branch stops
/// as soon as the pair is decided. Returns `None` for pairs that are
/// already decided, which are never scored.
pub fn decision_run_probability(
    paper_id: &PaperId,
    criterion_id: &CriterionId,
    counts: VoteCounts,
    stats: &CriterionStats,
    config: &StrategyConfig,
) -> Result<Option<PairScore>, DomainError> {
    let posterior = pair_posterior(stats.selectivity, stats.accuracy, counts.out_votes, counts.in_votes)?;
    if pair_decided(posterior, counts.total(), config) {
        return Ok(None);
    }

    struct Walk<'a> {
        stats: &'a CriterionStats,
        config: &'a StrategyConfig,
        decided_mass: f64,
        expected_votes: f64,
    }

    impl Walk<'_> {
        fn visit(&mut self, counts: VoteCounts, depth: u32, mass: f64) -> Result<(), DomainError> {
            let posterior = pair_posterior(self.stats.selectivity, self.stats.accuracy, counts.out_votes, counts.in_votes)?;
            if depth > 0 && pair_decided(posterior, counts.total(), self.config) {
                self.decided_mass += mass;
                self.expected_votes += f64::from(depth) * mass;
                return Ok(());
            }
            if depth == self.config.run_horizon {
                self.expected_votes += f64::from(depth) * mass;
                return Ok(());
            }
            let p_out = predicted_out_vote_probability(posterior, self.stats.accuracy)?;
            let out = VoteCounts {
                out_votes: counts.out_votes + 1,
                ..counts
            };
            let inn = VoteCounts {
                in_votes: counts.in_votes + 1,
                ..counts
            };
            self.visit(out, depth + 1, mass * p_out)?;
            self.visit(inn, depth + 1, mass * (1.0 - p_out))
        }
    }

    let mut walk = Walk {
        stats,
        config,
        decided_mass: 0.0,
        expected_votes: 0.0,
    };
    walk.visit(counts, 0, 1.0)?;
    Ok(Some(PairScore {
        paper_id: paper_id.clone(),
        criterion_id: criterion_id.clone(),
        decision_probability: walk.decided_mass,
        expected_votes: walk.expected_votes,
        score: walk.decided_mass / walk.expected_votes,
    }))
}

/// Orders scores best first: score descending, then (paper id, criterion id) ascending.
pub fn sort_scores(scores: &mut [PairScore]) {
    scores.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => (&a.paper_id, &a.criterion_id).cmp(&(&b.paper_id, &b.criterion_id)),
        other => other,
    });
}

/// Samples the initial-run papers and emits the vote requests for them,
/// `initial_run_votes_per_pair` per (paper, criterion), paper-major.
pub fn plan_initial_run(
    papers: &[PaperId],
    criteria: &[CriterionId],
    config: &StrategyConfig,
    master_seed: u64,
) -> (Vec<PaperId>, Vec<VoteRequest>) {
    let amount = (config.initial_run_papers as usize).min(papers.len());
    let mut rng = seed::rng_for(master_seed, "initial-run", 0);
    let sample: Vec<PaperId> = index::sample(&mut rng, papers.len(), amount)
        .into_iter()
        .map(|i| papers[i].clone())
        .collect();
    let mut requests = Vec::with_capacity(amount * criteria.len() * config.initial_run_votes_per_pair as usize);
    for paper in &sample {
        for criterion in criteria {
            for _ in 0..config.initial_run_votes_per_pair {
                requests.push(VoteRequest::new(paper.clone(), criterion.clone()));
            }
        }
    }
    (sample, requests)
}

/// Emits `budget` requests across `ranked`, one per pair per pass.
pub fn cycle_requests(ranked: &[VoteRequest], budget: usize) -> Vec<VoteRequest> {
    if ranked.is_empty() {
        return Vec::new();
    }
    ranked.iter().cycle().take(budget).cloned().collect()
}

/// Give-up event, in the order the rules fire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum GiveUpEvent {
    Paper { paper_id: PaperId, votes: u32 },
    Criterion { criterion_id: CriterionId },
    Project { given_up_criteria: usize, criteria: usize },
}

/// Project-level rule: strictly more than the configured fraction of
/// criteria given up.
pub fn project_gives_up(given_up: usize, total: usize, config: &StrategyConfig) -> bool {
    total > 0 && (given_up as f64 / total as f64) > config.give_up_criteria_fraction
}
