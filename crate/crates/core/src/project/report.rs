use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ProjectEvent, ScreeningProject};
use crate::domain::export::{ExportBudget, ExportCriterion, ExportDocument, ExportPaper, ExportPair, ExportVote};
use crate::domain::{Cents, CriterionId, PaperStatus, Phase, VoteKind};
use crate::strategy::CriterionStats;

const RECENT_EVENTS: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperCounts {
    pub undecided: usize,
    pub screened_out: usize,
    pub included: usize,
    pub given_up: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub project_id: String,
    pub phase: Phase,
    pub billable_votes: u64,
    pub spent_cents: Cents,
    pub spent: String,
    pub pending_requests: u64,
    pub papers: PaperCounts,
    pub criteria: BTreeMap<CriterionId, CriterionStats>,
    pub last_sequence_no: u64,
    pub recent_events: Vec<ProjectEvent>,
}

impl ScreeningProject {
    pub fn paper_counts(&self) -> PaperCounts {
        let mut counts = PaperCounts::default();
        for state in self.paper_states.values() {
            match state.status {
                PaperStatus::Undecided => counts.undecided += 1,
                PaperStatus::ScreenedOut(_) => counts.screened_out += 1,
                PaperStatus::Included => counts.included += 1,
                PaperStatus::GivenUp => counts.given_up += 1,
            }
        }
        counts
    }

    pub fn status(&self) -> StatusReport {
        let spent = self.budget_spent();
        let skip = self.events.len().saturating_sub(RECENT_EVENTS);
        StatusReport {
            project_id: self.id.clone(),
            phase: self.phase,
            billable_votes: self.billable_votes,
            spent_cents: spent,
            spent: spent.dollars_string(),
            pending_requests: self.pending_requests(),
            papers: self.paper_counts(),
            criteria: self.stats.clone(),
            last_sequence_no: self.last_sequence_no(),
            recent_events: self.events[skip..].to_vec(),
        }
    }

    /// The screening report: every paper's outcome with the votes behind it.
    pub fn export(&self) -> ExportDocument {
        let mut trails: BTreeMap<(&str, &str), Vec<ExportVote>> = BTreeMap::new();
        for v in self.votes.iter().filter(|v| v.kind == VoteKind::Candidate) {
            trails
                .entry((v.paper_id.as_str(), v.criterion_id.as_str()))
                .or_default()
                .push(ExportVote {
                    worker_id: v.worker_id.clone(),
                    label: v.label,
                    sequence_no: v.sequence_no,
                });
        }
        let criteria = self
            .inputs
            .criteria
            .iter()
            .map(|c| ExportCriterion {
                id: c.id.clone(),
                text: c.text.clone(),
                positive_example: c.positive_example.clone(),
                negative_example: c.negative_example.clone(),
                stats: self.stats.get(&c.id).cloned(),
            })
            .collect();
        let papers = self
            .inputs
            .papers
            .iter()
            .map(|p| {
                let state = &self.paper_states[&p.id];
                ExportPaper {
                    id: p.id.clone(),
                    status: state.status.name().to_string(),
                    deciding_criterion: state.status.deciding_criterion().cloned(),
                    p_out: state.exclusion_probability,
                    criteria: self
                        .inputs
                        .criteria
                        .iter()
                        .map(|c| ExportPair {
                            id: c.id.clone(),
                            posterior: self.posterior(&p.id, &c.id),
                            votes: trails.remove(&(p.id.as_str(), c.id.as_str())).unwrap_or_default(),
                        })
                        .collect(),
                }
            })
            .collect();
        ExportDocument {
            project_id: self.id.clone(),
            config: self.config.clone(),
            criteria,
            papers,
            budget: ExportBudget {
                votes: self.billable_votes,
                spent_cents: self.budget_spent(),
            },
        }
    }
}
