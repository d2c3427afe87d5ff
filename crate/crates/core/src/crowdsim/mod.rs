//! Simulated crowd standing in for a live crowdsourcing platform.
//!
//! The latent side ([`SimWorker`], [`GroundTruth`]) is visible only to the
//! simulator. The engine sees votes and honeypot outcomes and keeps its own
//! per-worker [`WorkerLedger`] under the [`QualityRules`].

mod driver;
mod quality;
mod truth;

pub use driver::{BudgetCap, CrowdGateway, GatewayError, SimulatedCrowd, VoteSubmission, WorkSummary};
pub use quality::{QualificationState, QualityRules, WorkerLedger};
pub use truth::{synthetic_project, GroundTruth};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{CriterionId, Label, WorkerId};
use crate::error::DomainError;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracyDistribution {
    Uniform { lo: f64, hi: f64 },
    Point { accuracy: f64 },
    TwoClass { good: f64, bad: f64, fraction_bad: f64 },
}

impl AccuracyDistribution {
    fn validate(&self) -> Result<(), DomainError> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(DomainError::out_of_range(name, v, "[0,1]"))
            }
        };
        match *self {
            AccuracyDistribution::Uniform { lo, hi } => {
                unit("lo", lo)?;
                unit("hi", hi)?;
                if lo > hi {
                    return Err(DomainError::Invalid(format!("uniform lo {lo} exceeds hi {hi}")));
                }
                Ok(())
            }
            AccuracyDistribution::Point { accuracy } => unit("accuracy", accuracy),
            AccuracyDistribution::TwoClass { good, bad, fraction_bad } => {
                unit("good", good)?;
                unit("bad", bad)?;
                unit("fraction_bad", fraction_bad)
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            AccuracyDistribution::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.gen_range(lo..hi)
                }
            }
            AccuracyDistribution::Point { accuracy } => accuracy,
            AccuracyDistribution::TwoClass { good, bad, fraction_bad } => {
                if rng.gen::<f64>() < fraction_bad {
                    bad
                } else {
                    good
                }
            }
        }
    }
}

/// Parameters of a simulated crowd (the `--crowd` file of the CLI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrowdModel {
    pub worker_count: usize,
    pub accuracy_distribution: AccuracyDistribution,
    pub seed: u64,
    #[serde(default)]
    pub badge_fraction: f64,
    /// Per-criterion accuracy that replaces every worker's own accuracy on
    /// that criterion; models criteria that are hard for the crowd.
    #[serde(default)]
    pub criterion_accuracy: BTreeMap<CriterionId, f64>,
}

impl CrowdModel {
    pub fn point(worker_count: usize, accuracy: f64, seed: u64) -> Self {
        Self {
            worker_count,
            accuracy_distribution: AccuracyDistribution::Point { accuracy },
            seed,
            badge_fraction: 0.0,
            criterion_accuracy: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.worker_count < 1 {
            return Err(DomainError::Invalid("worker_count must be at least 1".into()));
        }
        self.accuracy_distribution.validate()?;
        if !(0.0..=1.0).contains(&self.badge_fraction) {
            return Err(DomainError::out_of_range("badge_fraction", self.badge_fraction, "[0,1]"));
        }
        for &a in self.criterion_accuracy.values() {
            if !(0.0..=1.0).contains(&a) {
                return Err(DomainError::out_of_range("criterion_accuracy", a, "[0,1]"));
            }
        }
        Ok(())
    }

    /// Same model re-seeded, e.g. per Monte Carlo trial.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// A simulated participant. `true_accuracy` is latent: the engine never sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimWorker {
    pub worker_id: WorkerId,
    true_accuracy: f64,
    pub badge: bool,
}

impl SimWorker {
    pub fn new(worker_id: WorkerId, true_accuracy: f64, badge: bool) -> Self {
        Self {
            worker_id,
            true_accuracy,
            badge,
        }
    }

    /// Simulation oracle only; used by tests and the simulator itself.
    pub fn oracle_accuracy(&self) -> f64 {
        self.true_accuracy
    }

    /// Symmetric two-coin answer: the true label with probability `accuracy`.
    pub fn answer<R: Rng>(&self, true_label: Label, accuracy: f64, rng: &mut R) -> Label {
        if rng.gen::<f64>() < accuracy {
            true_label
        } else {
            true_label.flipped()
        }
    }
}

pub fn spawn_workers(model: &CrowdModel) -> Result<Vec<SimWorker>, DomainError> {
    model.validate()?;
    let mut rng = seed::rng_for(model.seed, "spawn-workers", 0);
    Ok((0..model.worker_count)
        .map(|i| {
            let accuracy = model.accuracy_distribution.sample(&mut rng);
            let badge = model.badge_fraction > 0.0 && rng.gen::<f64>() < model.badge_fraction;
            SimWorker::new(WorkerId::new(format!("w{i:04}")), accuracy, badge)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QualificationOutcome {
    Passed,
    Failed,
    /// Badge holders skip the entry test.
    Bypassed,
}

/// Stand-alone entry test: the worker answers each known-answer question and
/// passes only if every answer is correct.
pub fn qualification_test<R: Rng>(worker: &SimWorker, questions: &[Label], rng: &mut R) -> QualificationOutcome {
    if worker.badge {
        return QualificationOutcome::Bypassed;
    }
    let wrong = questions
        .iter()
        .map(|&truth| worker.answer(truth, worker.true_accuracy, rng) == truth)
        .filter(|&correct| !correct)
        .count();
    if wrong == 0 {
        QualificationOutcome::Passed
    } else {
        QualificationOutcome::Failed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_distribution() {
        let workers = spawn_workers(&CrowdModel::point(10, 0.9, 1)).unwrap();
        assert_eq!(workers.len(), 10);
        assert!(workers.iter().all(|w| w.oracle_accuracy() == 0.9));
    }

    #[test]
    fn deterministic_rosters() {
        let model = CrowdModel {
            worker_count: 50,
            accuracy_distribution: AccuracyDistribution::Uniform { lo: 0.6, hi: 0.95 },
            seed: 17,
            badge_fraction: 0.2,
            criterion_accuracy: BTreeMap::new(),
        };
        assert_eq!(spawn_workers(&model).unwrap(), spawn_workers(&model).unwrap());
        assert_ne!(spawn_workers(&model).unwrap(), spawn_workers(&model.with_seed(18)).unwrap());
        assert!(spawn_workers(&model).unwrap().iter().any(|w| w.badge));
    }

    #[test]
    fn uniform_mean() {
        let model = CrowdModel {
            worker_count: 1000,
            accuracy_distribution: AccuracyDistribution::Uniform { lo: 0.6, hi: 0.95 },
            seed: 2024,
            badge_fraction: 0.0,
            criterion_accuracy: BTreeMap::new(),
        };
        let workers = spawn_workers(&model).unwrap();
        let mean = workers.iter().map(|w| w.oracle_accuracy()).sum::<f64>() / 1000.0;
        assert!((mean - 0.775).abs() <= 0.01, "{mean}");
    }

    #[test]
    fn invalid_models() {
        assert!(spawn_workers(&CrowdModel::point(0, 0.9, 1)).is_err());
        assert!(spawn_workers(&CrowdModel::point(3, 1.2, 1)).is_err());
        let mut m = CrowdModel::point(3, 0.9, 1);
        m.accuracy_distribution = AccuracyDistribution::Uniform { lo: 0.9, hi: 0.6 };
        assert!(spawn_workers(&m).is_err());
        m.accuracy_distribution = AccuracyDistribution::TwoClass { good: 0.9, bad: 0.5, fraction_bad: 1.5 };
        assert!(spawn_workers(&m).is_err());
    }

    #[test]
    fn qualification_examples() {
        let mut rng = seed::rng_for(5, "qual", 0);
        let perfect = SimWorker::new(WorkerId::from("a"), 1.0, false);
        for _ in 0..100 {
            assert_eq!(qualification_test(&perfect, &[Label::Applies, Label::NotApplies], &mut rng), QualificationOutcome::Passed);
        }
        let badge = SimWorker::new(WorkerId::from("b"), 0.0, true);
        assert_eq!(qualification_test(&badge, &[Label::Applies, Label::NotApplies], &mut rng), QualificationOutcome::Bypassed);
    }

    #[test]
    fn coin_flip_pass_rate() {
        let mut rng = seed::rng_for(6, "qual-rate", 0);
        let passes = (0..10_000)
            .filter(|i| {
                let w = SimWorker::new(WorkerId::new(format!("w{i}")), 0.5, false);
                qualification_test(&w, &[Label::Applies, Label::NotApplies], &mut rng) == QualificationOutcome::Passed
            })
            .count();
        let rate = passes as f64 / 10_000.0;
        assert!((rate - 0.25).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn vote_accuracy() {
        let mut rng = seed::rng_for(8, "votes", 0);
        let w = SimWorker::new(WorkerId::from("w"), 0.8, false);
        let correct = (0..10_000)
            .filter(|i| {
                let truth = Label::from_applies(i % 3 == 0);
                w.answer(truth, 0.8, &mut rng) == truth
            })
            .count();
        assert!((correct as f64 / 10_000.0 - 0.8).abs() <= 0.01);
        let perfect = SimWorker::new(WorkerId::from("p"), 1.0, false);
        assert!((0..100).all(|_| perfect.answer(Label::Applies, 1.0, &mut rng) == Label::Applies));
    }
}
