use thiserror::Error;

use crate::domain::{CriterionId, PaperId, Phase, WorkerId};

/// Malformed or inconsistent project inputs. Never leaves a partial project behind.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("papers.csv: missing header `id,title,abstract`")]
    MissingHeader,
    #[error("papers.csv row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("{document}[{index}]: {reason}")]
    Field {
        document: &'static str,
        index: usize,
        reason: String,
    },
    #[error("at least {min} test items are required, got {got}")]
    TooFewTestItems { min: usize, got: usize },
    #[error("malformed {document}: {reason}")]
    Malformed {
        document: &'static str,
        reason: String,
    },
    #[error("config: {0}")]
    Config(String),
}

/// Precondition violations of the pure math and planning layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl DomainError {
    pub(crate) fn out_of_range(name: &'static str, value: f64, range: &'static str) -> Self {
        DomainError::OutOfRange { name, value, range }
    }
}

/// An operation was attempted in a lifecycle state that does not allow it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("`{op}` is not allowed in phase {phase}")]
    Phase { op: &'static str, phase: Phase },
    #[error("paper {0} is already decided")]
    PaperDecided(PaperId),
    #[error("unknown paper {0}")]
    UnknownPaper(PaperId),
    #[error("initial run is not complete")]
    InitialRunIncomplete,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Rejections at the vote-ingestion boundary.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoteError {
    #[error("worker {0} is excluded or unqualified")]
    Forbidden(WorkerId),
    #[error("worker {worker} already voted on ({paper}, {criterion})")]
    Duplicate {
        worker: WorkerId,
        paper: PaperId,
        criterion: CriterionId,
    },
    #[error("no pending request or test item for ({paper}, {criterion})")]
    NotRequested {
        paper: PaperId,
        criterion: CriterionId,
    },
    #[error("votes are not accepted in phase {0}")]
    Phase(Phase),
    #[error("unknown paper {0}")]
    UnknownPaper(PaperId),
    #[error("unknown criterion {0}")]
    UnknownCriterion(CriterionId),
    /// A logged vote that does not fit the state it is replayed onto.
    #[error("logged vote {sequence_no} does not replay: {reason}")]
    Replay { sequence_no: u64, reason: String },
}
