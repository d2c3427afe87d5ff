//! Monte Carlo budget curves: precision, recall and loss of each algorithm
//! at a range of vote budgets, plus the pareto front over (cost, loss).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, AggregationMethod, DawidSkeneParams, MatrixItem, MatrixVote, VoteMatrix};
use crate::config::ProjectConfig;
use crate::crowdsim::{
    qualification_test, spawn_workers, BudgetCap, CrowdModel, GroundTruth, QualificationOutcome, SimulatedCrowd,
};
use crate::domain::{Cents, CriterionId, Label, PaperId, PaperStatus, Phase, ProjectInputs};
use crate::error::DomainError;
use crate::project::ScreeningProject;
use crate::seed;
use crate::strategy::CriterionStats;

/// Votes queued per adaptive step in simulated runs.
pub const SIM_STEP_VOTES: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Algorithm {
    ShortestRun,
    /// `j` votes on every pair, aggregated with `method`.
    FixedJ { j: u32, method: AggregationMethod },
}

impl Algorithm {
    pub fn fixed_j(j: u32) -> Self {
        Algorithm::FixedJ {
            j,
            method: AggregationMethod::Majority,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::ShortestRun => f.write_str("shortest_run"),
            Algorithm::FixedJ {
                j,
                method: AggregationMethod::Majority,
            } => write!(f, "fixed_j:{j}"),
            Algorithm::FixedJ { j, method } => write!(f, "fixed_j:{j}:{method}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "shortest_run" || s == "sr" {
            return Ok(Algorithm::ShortestRun);
        }
        let bad = || DomainError::Invalid(format!("unknown algorithm {s:?}"));
        let rest = s
            .strip_prefix("fixed_j")
            .ok_or_else(bad)?
            .trim_start_matches(['(', ':']);
        let rest = rest.trim_end_matches(')');
        let mut parts = rest.split(':');
        let j: u32 = parts.next().and_then(|j| j.parse().ok()).ok_or_else(bad)?;
        if j == 0 {
            return Err(DomainError::Invalid("fixed_j needs at least one vote per pair".into()));
        }
        let method = match parts.next() {
            Some(m) => m.parse()?,
            None => AggregationMethod::Majority,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Algorithm::FixedJ { j, method })
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> Self {
        a.to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = DomainError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Parses a comma-separated algorithm list.
pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>, DomainError> {
    let algorithms: Vec<Algorithm> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if algorithms.is_empty() {
        return Err(DomainError::Empty("algorithms"));
    }
    Ok(algorithms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub algorithm: Algorithm,
    pub budget_votes: u64,
    pub budget_cents: Cents,
    pub precision: f64,
    pub recall: f64,
    pub loss: f64,
    pub trials: u32,
    pub mean_votes_used: f64,
    pub recall_std_error: f64,
}

/// Final outcome of one paper in a simulated run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Excluded,
    Included,
    /// Given up or still undecided: back to the authors.
    Undecided,
}

impl From<&PaperStatus> for Outcome {
    fn from(s: &PaperStatus) -> Self {
        match s {
            PaperStatus::ScreenedOut(_) => Outcome::Excluded,
            PaperStatus::Included => Outcome::Included,
            PaperStatus::Undecided | PaperStatus::GivenUp => Outcome::Undecided,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub loss: f64,
    pub decided: usize,
    pub false_exclusions: usize,
    pub false_inclusions: usize,
}

/// `(loss_ratio × false exclusions + false inclusions) / decided`, 0 when
/// nothing was decided.
pub fn loss(false_exclusions: usize, false_inclusions: usize, decided: usize, loss_ratio: f64) -> f64 {
    if decided == 0 {
        return 0.0;
    }
    (loss_ratio * false_exclusions as f64 + false_inclusions as f64) / decided as f64
}

/// Precision and recall of the exclusion decisions, and the loss over decided papers.
pub fn evaluate(outcomes: &BTreeMap<PaperId, Outcome>, truth: &GroundTruth, loss_ratio: f64) -> Metrics {
    let (mut tp, mut fe, mut fi, mut decided, mut true_excl) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (paper, outcome) in outcomes {
        let excluded = truth.excluded(paper);
        if excluded {
            true_excl += 1;
        }
        match outcome {
            Outcome::Excluded => {
                decided += 1;
                if excluded {
                    tp += 1;
                } else {
                    fe += 1;
                }
            }
            Outcome::Included => {
                decided += 1;
                if excluded {
                    fi += 1;
                }
            }
            Outcome::Undecided => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Metrics {
        precision: ratio(tp, tp + fe),
        recall: ratio(tp, true_excl),
        loss: loss(fe, fi, decided, loss_ratio),
        decided,
        false_exclusions: fe,
        false_inclusions: fi,
    }
}

/// What a simulation needs to know about a project.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTemplate {
    pub inputs: ProjectInputs,
    pub config: ProjectConfig,
    /// Current estimates; historical defaults are used when absent.
    pub stats: Option<BTreeMap<CriterionId, CriterionStats>>,
}

impl SimulationTemplate {
    pub fn new(inputs: ProjectInputs, config: ProjectConfig) -> Self {
        Self {
            inputs,
            config,
            stats: None,
        }
    }

    pub fn from_project(project: &ScreeningProject) -> Self {
        let stats = project.criterion_stats();
        Self {
            inputs: project.inputs().clone(),
            config: project.config().clone(),
            stats: (!stats.is_empty()).then(|| stats.clone()),
        }
    }

    pub fn selectivities(&self) -> BTreeMap<CriterionId, f64> {
        self.inputs
            .criteria
            .iter()
            .map(|c| {
                let s = self
                    .stats
                    .as_ref()
                    .and_then(|s| s.get(&c.id))
                    .map_or(self.config.historical.historical_selectivity, |s| s.selectivity);
                (c.id.clone(), s)
            })
            .collect()
    }

    /// A crowd matching the template's beliefs: historical accuracy, with
    /// per-criterion accuracies from the estimates when there are any.
    pub fn default_crowd(&self, worker_count: usize, seed: u64) -> CrowdModel {
        let mut crowd = CrowdModel::point(worker_count, self.config.historical.historical_accuracy, seed);
        if let Some(stats) = &self.stats {
            crowd.criterion_accuracy = stats.iter().map(|(c, s)| (c.clone(), s.accuracy)).collect();
        }
        crowd
    }

    pub fn sample_truth(&self, seed: u64) -> GroundTruth {
        let mut rng = seed::rng_for(seed, "truth", 0);
        GroundTruth::sample(&self.inputs, &self.selectivities(), &mut rng)
    }
}

/// Result of one simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub outcomes: BTreeMap<PaperId, Outcome>,
    pub billable_votes: u64,
}

/// Runs the full engine against a simulated crowd: initial run, then
/// adaptive steps until the project finishes, the crowd stalls or the
/// billable-vote cap is reached.
pub fn run_shortest_run(
    inputs: &ProjectInputs,
    config: &ProjectConfig,
    truth: GroundTruth,
    crowd: &CrowdModel,
    vote_cap: Option<u64>,
    seed: u64,
) -> Result<ScreeningProject, DomainError> {
    let mut project = ScreeningProject::create("simulation", inputs.clone(), config.clone())
        .map_err(|e| DomainError::Invalid(e.to_string()))?;
    let mut sim = SimulatedCrowd::new(&crowd.with_seed(seed::derive_seed(seed, "crowd", 0)), truth)?;
    let mut cap = vote_cap.map_or_else(BudgetCap::unlimited, BudgetCap::votes);
    let gateway_err = |e: crate::crowdsim::GatewayError| DomainError::Invalid(e.to_string());

    project
        .start_initial_run(seed::derive_seed(seed, "initial-run", 0))
        .map_err(|e| DomainError::Invalid(e.to_string()))?;
    sim.work(&mut project, &mut cap).map_err(gateway_err)?;
    while project.phase() == Phase::Adaptive && !cap.exhausted() {
        let requests = project
            .step(SIM_STEP_VOTES)
            .map_err(|e| DomainError::Invalid(e.to_string()))?;
        if requests.is_empty() {
            break;
        }
        let done = sim.work(&mut project, &mut cap).map_err(gateway_err)?;
        if done.votes == 0 {
            break;
        }
    }
    Ok(project)
}

/// The fixed-J baseline: `j` votes from distinct qualified workers on every
/// pair, in paper order, until the budget runs out. A paper is decided only
/// once all its pairs have their `j` votes.
#[allow(clippy::too_many_arguments)]
pub fn run_fixed_j(
    inputs: &ProjectInputs,
    truth: &GroundTruth,
    crowd: &CrowdModel,
    j: u32,
    method: AggregationMethod,
    vote_cap: Option<u64>,
    questions: usize,
    seed: u64,
) -> Result<TrialResult, DomainError> {
    let workers = spawn_workers(&crowd.with_seed(seed::derive_seed(seed, "crowd", 0)))?;
    let mut rng: ChaCha8Rng = seed::rng_for(seed, "fixed-j", 0);

    let gold: Vec<Label> = inputs
        .test_items
        .iter()
        .flat_map(|t| t.labels.values().map(|&v| Label::from_applies(v)))
        .take(questions)
        .collect();
    let qualified: Vec<usize> = (0..workers.len())
        .filter(|&w| qualification_test(&workers[w], &gold, &mut rng) != QualificationOutcome::Failed)
        .collect();
    if (qualified.len() as u32) < j {
        return Err(DomainError::Invalid(format!(
            "{} qualified workers cannot give {j} distinct votes per pair",
            qualified.len()
        )));
    }

    let mut order = qualified;
    order.shuffle(&mut rng);
    let mut budget = vote_cap.unwrap_or(u64::MAX);
    let mut items = Vec::new();
    let mut votes = Vec::new();
    let mut complete: BTreeMap<PaperId, bool> = BTreeMap::new();
    let mut next_worker = 0usize;
    for paper in &inputs.papers {
        let mut paper_complete = true;
        for criterion in &inputs.criteria {
            let item = items.len();
            let mut cast = 0;
            for _ in 0..j {
                if budget == 0 {
                    break;
                }
                let w = order[next_worker % order.len()];
                next_worker += 1;
                let accuracy = crowd
                    .criterion_accuracy
                    .get(&criterion.id)
                    .copied()
                    .unwrap_or_else(|| workers[w].oracle_accuracy());
                let label = workers[w].answer(truth.label(&paper.id, &criterion.id), accuracy, &mut rng);
                votes.push(MatrixVote { item, worker: w, label });
                budget -= 1;
                cast += 1;
            }
            if cast > 0 {
                items.push(MatrixItem {
                    paper_id: paper.id.clone(),
                    criterion_id: criterion.id.clone(),
                });
            }
            paper_complete &= cast == j;
        }
        complete.insert(paper.id.clone(), paper_complete);
    }
    let billable_votes = votes.len() as u64;

    let mut excluded_by_crowd: BTreeMap<PaperId, bool> = BTreeMap::new();
    if !items.is_empty() {
        let worker_ids = workers.iter().map(|w| w.worker_id.clone()).collect();
        let matrix = VoteMatrix::new(items, worker_ids, votes)?;
        let labels = aggregate(method, &matrix, DawidSkeneParams::default())?;
        for (item, label) in matrix.items.iter().zip(labels) {
            *excluded_by_crowd.entry(item.paper_id.clone()).or_insert(false) |= label == Label::Applies;
        }
    }
    let outcomes = inputs
        .papers
        .iter()
        .map(|p| {
            let outcome = match (complete[&p.id], excluded_by_crowd.get(&p.id)) {
                (true, Some(true)) => Outcome::Excluded,
                (true, _) => Outcome::Included,
                (false, _) => Outcome::Undecided,
            };
            (p.id.clone(), outcome)
        })
        .collect();
    Ok(TrialResult {
        outcomes,
        billable_votes,
    })
}

/// Quality of a run as it progressed, one point per decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Screening votes on candidate pairs so far.
    pub screening_votes: u64,
    /// All billable votes so far, honeypots included.
    pub billable_votes: u64,
    /// Loss if screening stopped here: papers not yet screened out stay in
    /// the review as included; given-up papers are not counted.
    pub loss: f64,
}

/// Replays a finished simulation's decision events against the truth.
pub fn loss_trajectory(project: &ScreeningProject, truth: &GroundTruth, loss_ratio: f64) -> Vec<TrajectoryPoint> {
    use crate::project::ProjectEvent;
    use crate::strategy::GiveUpEvent;

    let mut screening_at = vec![0u64];
    let mut billable_at = vec![0u64];
    for v in project.vote_log() {
        screening_at.push(screening_at.last().unwrap() + u64::from(v.kind == crate::domain::VoteKind::Candidate));
        billable_at.push(billable_at.last().unwrap() + u64::from(v.kind.billable()));
    }
    let mut outcomes: BTreeMap<PaperId, Option<Outcome>> =
        project.inputs().papers.iter().map(|p| (p.id.clone(), Some(Outcome::Included))).collect();
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    for event in project.events() {
        let at = match event {
            ProjectEvent::Decided {
                paper_id,
                decision,
                at_sequence,
                ..
            } => {
                let outcome = match decision {
                    crate::bayes::Decision::ScreenOut(_) => Outcome::Excluded,
                    _ => Outcome::Included,
                };
                outcomes.insert(paper_id.clone(), Some(outcome));
                *at_sequence
            }
            ProjectEvent::GaveUp {
                give_up: GiveUpEvent::Paper { paper_id, .. },
                at_sequence,
            } => {
                outcomes.insert(paper_id.clone(), None);
                *at_sequence
            }
            _ => continue,
        };
        let counted: BTreeMap<PaperId, Outcome> =
            outcomes.iter().filter_map(|(p, o)| o.map(|o| (p.clone(), o))).collect();
        let point = TrajectoryPoint {
            screening_votes: screening_at[at as usize],
            billable_votes: billable_at[at as usize],
            loss: evaluate(&counted, truth, loss_ratio).loss,
        };
        match points.last_mut() {
            Some(last) if last.billable_votes == point.billable_votes => *last = point,
            _ => points.push(point),
        }
    }
    points
}

/// One seeded trial of `algorithm` capped at `budget` votes, on a freshly sampled truth.
pub fn run_trial(
    template: &SimulationTemplate,
    crowd: &CrowdModel,
    algorithm: Algorithm,
    budget: Option<u64>,
    trial_seed: u64,
) -> Result<(TrialResult, GroundTruth), DomainError> {
    let truth = template.sample_truth(trial_seed);
    let result = match algorithm {
        Algorithm::ShortestRun => {
            let project = run_shortest_run(
                &template.inputs,
                &template.config,
                truth.clone(),
                crowd,
                budget,
                trial_seed,
            )?;
            TrialResult {
                outcomes: project
                    .paper_states()
                    .map(|s| (s.paper_id.clone(), Outcome::from(&s.status)))
                    .collect(),
                billable_votes: project.billable_votes(),
            }
        }
        Algorithm::FixedJ { j, method } => run_fixed_j(
            &template.inputs,
            &truth,
            crowd,
            j,
            method,
            budget,
            template.config.quality.qualification_questions as usize,
            trial_seed,
        )?,
    };
    Ok((result, truth))
}

/// Sub-seed of trial `t` of `algorithm` at `checkpoint`.
pub fn trial_seed(master: u64, algorithm: Algorithm, checkpoint: u64, t: u32) -> u64 {
    let purpose = format!("trial/{algorithm}/{checkpoint}");
    seed::derive_seed(master, &purpose, u64::from(t))
}

/// Mean precision, recall and loss for every algorithm at every checkpoint.
/// Trials run in parallel; results do not depend on scheduling.
pub fn simulate_curves(
    template: &SimulationTemplate,
    crowd: &CrowdModel,
    algorithms: &[Algorithm],
    checkpoints: &[u64],
    trials: u32,
    master_seed: u64,
) -> Result<Vec<CurvePoint>, DomainError> {
    if trials < 1 {
        return Err(DomainError::Invalid("trials must be at least 1".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DomainError::Invalid("checkpoints must be strictly increasing".into()));
    }
    crowd.validate()?;
    let loss_ratio = template.config.strategy.loss_ratio;
    let price = template.config.strategy.price_per_vote;

    let jobs: Vec<(Algorithm, u64, u32)> = algorithms
        .iter()
        .flat_map(|&a| checkpoints.iter().flat_map(move |&b| (0..trials).map(move |t| (a, b, t))))
        .collect();
    let results: Vec<(Metrics, u64)> = jobs
        .par_iter()
        .map(|&(a, b, t)| {
            let (result, truth) = run_trial(template, crowd, a, Some(b), trial_seed(master_seed, a, b, t))?;
            Ok((evaluate(&result.outcomes, &truth, loss_ratio), result.billable_votes))
        })
        .collect::<Result<_, DomainError>>()?;

    let n = f64::from(trials);
    Ok(jobs
        .chunks(trials as usize)
        .zip(results.chunks(trials as usize))
        .map(|(job, res)| {
            let (algorithm, budget_votes, _) = job[0];
            let mean = |f: &dyn Fn(&(Metrics, u64)) -> f64| res.iter().map(f).sum::<f64>() / n;
            let recall = mean(&|r| r.0.recall);
            let recall_std_error = if trials > 1 {
                let var = res.iter().map(|r| (r.0.recall - recall).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                algorithm,
                budget_votes,
                budget_cents: price * budget_votes,
                precision: mean(&|r| r.0.precision),
                recall,
                loss: mean(&|r| r.0.loss),
                trials,
                mean_votes_used: mean(&|r| r.1 as f64),
                recall_std_error,
            }
        })
        .collect())
}

/// Evenly spaced checkpoints `step, 2·step, …` up to and including `max`.
pub fn default_checkpoints(max: u64, count: u64) -> Vec<u64> {
    let count = count.max(1);
    let step = (max / count).max(1);
    let mut points: Vec<u64> = (1..=count).map(|i| i * step).filter(|&b| b <= max).collect();
    if points.last() != Some(&max) && max > 0 {
        points.push(max);
    }
    points
}

/// Points not strictly dominated in (cost, loss), lower being better on both.
/// Exact duplicates keep the first occurrence; output is sorted by cost.
pub fn pareto_front(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, DomainError> {
    Ok(pareto_indices(points)?.into_iter().map(|i| points[i]).collect())
}

/// Indices into `points` of the pareto front, in front order.
pub fn pareto_indices(points: &[(f64, f64)]) -> Result<Vec<usize>, DomainError> {
    if points.is_empty() {
        return Err(DomainError::Empty("points"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    let mut best_loss = f64::INFINITY;
    for i in order {
        let (cost, l) = points[i];
        if let Some(&last) = front.last() {
            let (last_cost, last_loss) = points[last];
            if last_cost == cost && last_loss == l {
                continue;
            }
        }
        if l < best_loss {
            front.push(i);
            best_loss = l;
        }
    }
    Ok(front)
}

/// Pareto front over curve points, by (budget_cents, loss), across algorithms.
pub fn curve_front(points: &[CurvePoint]) -> Vec<CurvePoint> {
    if points.is_empty() {
        return Vec::new();
    }
    let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.budget_cents.0 as f64, p.loss)).collect();
    pareto_indices(&coords)
        .expect("non-empty")
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Curves and their front, as returned to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
    pub pareto_front: Vec<CurvePoint>,
}

impl CurveReport {
    pub fn new(points: Vec<CurvePoint>) -> Self {
        let pareto_front = curve_front(&points);
        Self { points, pareto_front }
    }
}

/// CSV rendering with the columns
/// `algorithm,budget_votes,budget_cents,precision,recall,loss,trials`.
pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "budget_votes", "budget_cents", "precision", "recall", "loss", "trials"])
        .expect("in-memory write");
    for p in points {
        w.write_record([
            p.algorithm.to_string(),
            p.budget_votes.to_string(),
            p.budget_cents.0.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.loss.to_string(),
            p.trials.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Projected adaptive-phase spend: mean billable votes beyond the initial run
/// over uncapped simulated runs, priced.
pub fn projected_adaptive_cost(template: &SimulationTemplate, trials: u32, master_seed: u64) -> Result<Cents, DomainError> {
    let trials = trials.max(1);
    let crowd = template.default_crowd(50, master_seed);
    let s = &template.config.strategy;
    let initial = u64::from(s.initial_run_votes_per_pair)
        * u64::from(s.initial_run_papers).min(template.inputs.papers.len() as u64)
        * template.inputs.criteria.len() as u64;
    let totals: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = seed::derive_seed(master_seed, "estimate", u64::from(t));
            run_trial(template, &crowd, Algorithm::ShortestRun, None, seed).map(|(r, _)| r.billable_votes)
        })
        .collect::<Result<_, _>>()?;
    let mean = totals.iter().map(|&v| v.saturating_sub(initial)).sum::<u64>() as f64 / f64::from(trials);
    Ok(s.price_per_vote * mean.round() as u64)
}
