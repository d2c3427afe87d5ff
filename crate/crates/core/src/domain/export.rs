//! The transparent screening report (`export.json`).

use serde::{Deserialize, Serialize};

use super::{Cents, CriterionId, Label, PaperId, WorkerId};
use crate::config::ProjectConfig;
use crate::strategy::CriterionStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub project_id: String,
    pub config: ProjectConfig,
    pub criteria: Vec<ExportCriterion>,
    pub papers: Vec<ExportPaper>,
    pub budget: ExportBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportCriterion {
    pub id: CriterionId,
    pub text: String,
    pub positive_example: PaperId,
    pub negative_example: PaperId,
    /// Absent until the initial run completes.
    pub stats: Option<CriterionStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportPaper {
    pub id: PaperId,
    pub status: String,
    pub deciding_criterion: Option<CriterionId>,
    pub p_out: f64,
    pub criteria: Vec<ExportPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportPair {
    pub id: CriterionId,
    pub posterior: f64,
    pub votes: Vec<ExportVote>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportVote {
    pub worker_id: WorkerId,
    pub label: Label,
    pub sequence_no: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportBudget {
    /// Billable votes, honeypots included.
    pub votes: u64,
    pub spent_cents: Cents,
}

impl ExportDocument {
    /// Pretty JSON with a trailing newline. Field order follows the struct
    /// declarations, so equal documents serialize to identical bytes.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("export document serializes");
        out.push('\n');
        out
    }
}
