use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{CriterionId, PaperId};
use crate::error::ValidationError;

/// Worker quality control: entry test, periodic honeypots and exclusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityRules {
    /// Every `honeypot_interval`-th item of a screening task is a hidden test item.
    pub honeypot_interval: u32,
    /// Running honeypot accuracy below this excludes the worker.
    pub honeypot_exclusion_floor: f64,
    /// Honeypots answered before exclusion can trigger.
    pub honeypot_min_answers: u32,
    pub qualification_questions: u32,
    /// Items per task assignment.
    pub task_size: u32,
}

impl Default for QualityRules {
    fn default() -> Self {
        Self {
            honeypot_interval: 10,
            honeypot_exclusion_floor: 0.7,
            honeypot_min_answers: 4,
            qualification_questions: 2,
            task_size: 5,
        }
    }
}

impl QualityRules {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.honeypot_interval < 2 {
            return Err(ValidationError::Config("honeypot_interval must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.honeypot_exclusion_floor) {
            return Err(ValidationError::Config("honeypot_exclusion_floor must be in [0,1]".into()));
        }
        if self.qualification_questions < 1 || self.task_size < 1 || self.honeypot_min_answers < 1 {
            return Err(ValidationError::Config("qualification_questions, task_size and honeypot_min_answers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum QualificationState {
    Untested,
    InProgress { criterion_id: CriterionId, answers: Vec<bool> },
    Passed,
    Failed,
    /// Badge holder, never tested.
    Bypassed,
}

/// What the platform knows about one worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerLedger {
    pub badge: bool,
    pub qualification: QualificationState,
    pub honeypot_record: Vec<(CriterionId, bool)>,
    pub items_since_honeypot: u32,
    pub excluded: bool,
    pub bound_criterion: Option<CriterionId>,
    pub voted: BTreeSet<(PaperId, CriterionId)>,
}

impl WorkerLedger {
    pub fn new(badge: bool) -> Self {
        Self {
            badge,
            qualification: if badge {
                QualificationState::Bypassed
            } else {
                QualificationState::Untested
            },
            honeypot_record: Vec::new(),
            items_since_honeypot: 0,
            excluded: false,
            bound_criterion: None,
            voted: BTreeSet::new(),
        }
    }

    pub fn is_qualified(&self) -> bool {
        matches!(self.qualification, QualificationState::Passed | QualificationState::Bypassed)
    }

    /// Excluded by honeypots or failed the entry test.
    pub fn is_blocked(&self) -> bool {
        self.excluded || matches!(self.qualification, QualificationState::Failed)
    }

    pub fn has_voted(&self, paper: &PaperId, criterion: &CriterionId) -> bool {
        self.voted.contains(&(paper.clone(), criterion.clone()))
    }

    pub fn qualification_answers(&self) -> usize {
        match &self.qualification {
            QualificationState::InProgress { answers, .. } => answers.len(),
            _ => 0,
        }
    }

    /// Records one entry-test answer. The test passes only if all answers are correct.
    pub fn record_qualification(&mut self, criterion: &CriterionId, correct: bool, rules: &QualityRules) {
        let mut answers = match std::mem::replace(&mut self.qualification, QualificationState::Untested) {
            QualificationState::InProgress { answers, .. } => answers,
            _ => Vec::new(),
        };
        answers.push(correct);
        self.qualification = if answers.len() as u32 >= rules.qualification_questions {
            if answers.iter().all(|&a| a) {
                QualificationState::Passed
            } else {
                QualificationState::Failed
            }
        } else {
            QualificationState::InProgress {
                criterion_id: criterion.clone(),
                answers,
            }
        };
    }

    pub fn honeypot_accuracy(&self) -> Option<f64> {
        if self.honeypot_record.is_empty() {
            return None;
        }
        let correct = self.honeypot_record.iter().filter(|(_, c)| *c).count();
        Some(correct as f64 / self.honeypot_record.len() as f64)
    }

    /// Records a honeypot answer; returns true when this answer excluded the worker.
    pub fn record_honeypot(&mut self, criterion: &CriterionId, correct: bool, rules: &QualityRules) -> bool {
        self.honeypot_record.push((criterion.clone(), correct));
        self.items_since_honeypot = 0;
        if self.excluded {
            return false;
        }
        let enough = self.honeypot_record.len() as u32 >= rules.honeypot_min_answers;
        if enough && self.honeypot_accuracy().unwrap_or(1.0) < rules.honeypot_exclusion_floor {
            self.excluded = true;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    #[test]
    fn two_of_six_excludes() {
        let rules = QualityRules::default();
        let c = CriterionId::from("c1");
        let mut ledger = WorkerLedger::new(false);
        let answers = [true, false, false, true, false, false];
        let mut excluded_at = None;
        for (i, &a) in answers.iter().enumerate() {
            if ledger.record_honeypot(&c, a, &rules) {
                excluded_at = Some(i + 1);
            }
        }
        assert!(ledger.excluded);
        // 2/4 = 0.5 < 0.7 already at the fourth honeypot.
        assert_eq!(excluded_at, Some(4));
        assert!((ledger.honeypot_accuracy().unwrap() - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn needs_minimum_answers() {
        let rules = QualityRules::default();
        let c = CriterionId::from("c1");
        let mut ledger = WorkerLedger::new(false);
        for _ in 0..3 {
            assert!(!ledger.record_honeypot(&c, false, &rules));
        }
        assert!(ledger.record_honeypot(&c, false, &rules));
    }

    #[test]
    fn qualification_flow() {
        let rules = QualityRules::default();
        let c = CriterionId::from("c1");
        let mut pass = WorkerLedger::new(false);
        pass.record_qualification(&c, true, &rules);
        assert!(!pass.is_qualified());
        pass.record_qualification(&c, true, &rules);
        assert!(pass.is_qualified());

        let mut fail = WorkerLedger::new(false);
        fail.record_qualification(&c, true, &rules);
        fail.record_qualification(&c, false, &rules);
        assert!(fail.is_blocked());

        assert!(WorkerLedger::new(true).is_qualified());
    }

    #[test]
    fn coin_flippers_are_caught_within_forty_honeypots() {
        let rules = QualityRules::default();
        let c = CriterionId::from("c1");
        let mut rng = rng_for(99, "honeypot-soundness", 0);
        let caught = (0..1000)
            .filter(|_| {
                let mut ledger = WorkerLedger::new(false);
                (0..40).any(|_| ledger.record_honeypot(&c, rng.gen::<f64>() < 0.5, &rules))
            })
            .count();
        assert!(caught as f64 / 1000.0 >= 0.9, "{caught}");
    }
}
