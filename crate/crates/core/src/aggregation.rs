//! Offline label aggregation over a fixed vote matrix.
//!
//! [`Aggregator`] is the extension point for further methods; majority vote
//! and Dawid–Skene EM are provided.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{CriterionId, Label, PaperId, WorkerId};
use crate::error::DomainError;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatrixItem {
    pub paper_id: PaperId,
    pub criterion_id: CriterionId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixVote {
    pub item: usize,
    pub worker: usize,
    pub label: Label,
}

/// Sparse item × worker label matrix (`{"items","workers","votes"}` on disk).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMatrix {
    pub items: Vec<MatrixItem>,
    pub workers: Vec<WorkerId>,
    pub votes: Vec<MatrixVote>,
}

impl VoteMatrix {
    pub fn new(items: Vec<MatrixItem>, workers: Vec<WorkerId>, votes: Vec<MatrixVote>) -> Result<Self, DomainError> {
        let matrix = Self { items, workers, votes };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn from_json(json: &str) -> Result<Self, DomainError> {
        let matrix: VoteMatrix =
            serde_json::from_str(json).map_err(|e| DomainError::Invalid(format!("malformed vote matrix: {e}")))?;
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let mut seen = BTreeSet::new();
        let mut covered = vec![false; self.items.len()];
        for (n, v) in self.votes.iter().enumerate() {
            if v.item >= self.items.len() || v.worker >= self.workers.len() {
                return Err(DomainError::Invalid(format!("vote {n} references an index out of range")));
            }
            if !seen.insert((v.item, v.worker)) {
                return Err(DomainError::Invalid(format!(
                    "worker {} votes twice on item {}",
                    self.workers[v.worker], v.item
                )));
            }
            covered[v.item] = true;
        }
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err(DomainError::Invalid(format!("item {missing} has no votes")));
        }
        Ok(())
    }

    fn labels_by_item(&self) -> Vec<Vec<(usize, Label)>> {
        let mut by_item = vec![Vec::new(); self.items.len()];
        for v in &self.votes {
            by_item[v.item].push((v.worker, v.label));
        }
        by_item
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorityOutcome {
    Applies,
    NotApplies,
    Tie,
}

pub fn majority_vote(labels: &[Label]) -> Result<MajorityOutcome, DomainError> {
    if labels.is_empty() {
        return Err(DomainError::Empty("labels"));
    }
    let out = labels.iter().filter(|l| l.applies()).count();
    let inn = labels.len() - out;
    Ok(match out.cmp(&inn) {
        std::cmp::Ordering::Greater => MajorityOutcome::Applies,
        std::cmp::Ordering::Less => MajorityOutcome::NotApplies,
        std::cmp::Ordering::Equal => MajorityOutcome::Tie,
    })
}

/// Majority label with ties resolved to `not_applies`, the conservative side.
pub fn majority_label(labels: &[Label]) -> Result<Label, DomainError> {
    Ok(match majority_vote(labels)? {
        MajorityOutcome::Applies => Label::Applies,
        MajorityOutcome::NotApplies | MajorityOutcome::Tie => Label::NotApplies,
    })
}

/// A worker's confusion matrix: `confusion[true][emitted]`, indexed by [`Label::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerModel {
    pub worker_id: WorkerId,
    pub confusion: [[f64; 2]; 2],
}

impl WorkerModel {
    pub fn symmetric(worker_id: WorkerId, accuracy: f64) -> Self {
        Self {
            worker_id,
            confusion: [[accuracy, 1.0 - accuracy], [1.0 - accuracy, accuracy]],
        }
    }

    /// Mean of the two diagonal entries.
    pub fn accuracy(&self) -> f64 {
        0.5 * (self.confusion[0][0] + self.confusion[1][1])
    }

    pub fn emit_probability(&self, truth: Label, emitted: Label) -> f64 {
        self.confusion[truth.index()][emitted.index()]
    }
}

/// Posterior that an item's label is `applies` given a class prior and the
/// labels emitted by workers with known confusion matrices. Evaluated in log space.
pub fn e_step_item(prior_applies: f64, votes: &[(&WorkerModel, Label)]) -> f64 {
    let mut log_applies = prior_applies.ln();
    let mut log_not = (1.0 - prior_applies).ln();
    for (model, label) in votes {
        log_applies += model.emit_probability(Label::Applies, *label).ln();
        log_not += model.emit_probability(Label::NotApplies, *label).ln();
    }
    let max = log_applies.max(log_not);
    let a = (log_applies - max).exp();
    let n = (log_not - max).exp();
    a / (a + n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneParams {
    pub max_iters: u32,
    pub tol: f64,
}

impl Default for DawidSkeneParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneFit {
    /// P(applies) per item, in matrix item order.
    pub posteriors: Vec<f64>,
    pub class_prior: f64,
    /// Only workers with at least one vote, in matrix worker order.
    pub workers: Vec<WorkerModel>,
    pub iterations: u32,
    pub converged: bool,
    /// Smoothed log-likelihood after each M-step. Add-one smoothing makes this
    /// the MAP objective, which EM never decreases.
    pub log_likelihood: Vec<f64>,
}

impl DawidSkeneFit {
    pub fn labels(&self) -> Vec<Label> {
        self.posteriors.iter().map(|&p| Label::from_applies(p > 0.5)).collect()
    }
}

/// Binary Dawid–Skene EM with per-worker confusion matrices.
///
/// Starts from majority-vote soft labels. Each iteration re-estimates the
/// class prior and add-one-smoothed confusion matrices, then recomputes item
/// posteriors; stops once no posterior moves by `tol` or more.
pub fn dawid_skene(matrix: &VoteMatrix, params: DawidSkeneParams) -> Result<DawidSkeneFit, DomainError> {
    if params.max_iters < 1 {
        return Err(DomainError::Invalid("max_iters must be at least 1".into()));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(DomainError::Invalid("tol must be positive".into()));
    }
    matrix.validate()?;
    let by_item = matrix.labels_by_item();

    let mut soft: Vec<f64> = by_item
        .iter()
        .map(|votes| votes.iter().filter(|(_, l)| l.applies()).count() as f64 / votes.len() as f64)
        .collect();

    let mut voted = vec![false; matrix.workers.len()];
    for v in &matrix.votes {
        voted[v.worker] = true;
    }

    let mut prior = 0.5;
    let mut models: Vec<WorkerModel> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iters {
        iterations += 1;

        // M-step.
        prior = soft.iter().sum::<f64>() / soft.len() as f64;
        let mut counts = vec![[[1.0f64; 2]; 2]; matrix.workers.len()];
        for (item, votes) in by_item.iter().enumerate() {
            let t = [1.0 - soft[item], soft[item]];
            for &(w, label) in votes {
                for (truth, weight) in t.iter().enumerate() {
                    counts[w][truth][label.index()] += weight;
                }
            }
        }
        models = counts
            .iter()
            .enumerate()
            .map(|(w, c)| {
                let mut confusion = [[0.0; 2]; 2];
                for truth in 0..2 {
                    let row = c[truth][0] + c[truth][1];
                    confusion[truth] = [c[truth][0] / row, c[truth][1] / row];
                }
                WorkerModel {
                    worker_id: matrix.workers[w].clone(),
                    confusion,
                }
            })
            .collect();
        trace.push(smoothed_log_likelihood(&by_item, prior, &models, &voted));

        // E-step.
        let mut max_change: f64 = 0.0;
        for (item, votes) in by_item.iter().enumerate() {
            let evidence: Vec<(&WorkerModel, Label)> = votes.iter().map(|&(w, l)| (&models[w], l)).collect();
            let updated = e_step_item(prior, &evidence);
            max_change = max_change.max((updated - soft[item]).abs());
            soft[item] = updated;
        }
        if max_change < params.tol {
            converged = true;
            break;
        }
    }

    Ok(DawidSkeneFit {
        posteriors: soft,
        class_prior: prior,
        workers: models
            .into_iter()
            .zip(&voted)
            .filter_map(|(m, &v)| v.then_some(m))
            .collect(),
        iterations,
        converged,
        log_likelihood: trace,
    })
}

/// Marginal log-likelihood of the observed labels plus the log of the
/// Dirichlet(2,2) density implied by add-one smoothing (up to a constant).
fn smoothed_log_likelihood(by_item: &[Vec<(usize, Label)>], prior: f64, models: &[WorkerModel], voted: &[bool]) -> f64 {
    let mut total = 0.0;
    for votes in by_item {
        let mut log_applies = prior.ln();
        let mut log_not = (1.0 - prior).ln();
        for &(w, label) in votes {
            log_applies += models[w].emit_probability(Label::Applies, label).ln();
            log_not += models[w].emit_probability(Label::NotApplies, label).ln();
        }
        let max = log_applies.max(log_not);
        total += max + ((log_applies - max).exp() + (log_not - max).exp()).ln();
    }
    for (model, _) in models.iter().zip(voted).filter(|(_, &v)| v) {
        for row in &model.confusion {
            total += row[0].ln() + row[1].ln();
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    Majority,
    DawidSkene,
}

impl FromStr for AggregationMethod {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "majority" => Ok(AggregationMethod::Majority),
            "dawid_skene" | "dawid-skene" | "ds" => Ok(AggregationMethod::DawidSkene),
            other => Err(DomainError::Invalid(format!("unknown aggregation method {other:?}"))),
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMethod::Majority => "majority",
            AggregationMethod::DawidSkene => "dawid_skene",
        })
    }
}

/// Common interface for label aggregation methods.
pub trait Aggregator {
    fn aggregate(&self, matrix: &VoteMatrix) -> Result<Vec<Label>, DomainError>;
}

pub struct MajorityAggregator;

impl Aggregator for MajorityAggregator {
    fn aggregate(&self, matrix: &VoteMatrix) -> Result<Vec<Label>, DomainError> {
        matrix.validate()?;
        matrix
            .labels_by_item()
            .iter()
            .map(|votes| {
                let labels: Vec<Label> = votes.iter().map(|&(_, l)| l).collect();
                majority_label(&labels)
            })
            .collect()
    }
}

pub struct DawidSkeneAggregator(pub DawidSkeneParams);

impl Aggregator for DawidSkeneAggregator {
    fn aggregate(&self, matrix: &VoteMatrix) -> Result<Vec<Label>, DomainError> {
        Ok(dawid_skene(matrix, self.0)?.labels())
    }
}

/// Dispatches to the named method.
pub fn aggregate(method: AggregationMethod, matrix: &VoteMatrix, params: DawidSkeneParams) -> Result<Vec<Label>, DomainError> {
    match method {
        AggregationMethod::Majority => MajorityAggregator.aggregate(matrix),
        AggregationMethod::DawidSkene => DawidSkeneAggregator(params).aggregate(matrix),
    }
}
