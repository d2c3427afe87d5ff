//! Core data model shared by every other module.

mod input;
mod money;

pub mod export;

pub use input::{load_criteria, load_papers, load_test_items, ProjectInputs, MIN_TEST_ITEMS};
pub use money::Cents;

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_newtype!(
    /// Identifier of a candidate paper.
    PaperId
);
id_newtype!(
    /// Identifier of an exclusion criterion.
    CriterionId
);
id_newtype!(
    /// Identifier of a crowd worker.
    WorkerId
);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paper {
    pub id: PaperId,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

/// A yes/no exclusion question; "applies" removes the paper from the review.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: CriterionId,
    pub text: String,
    pub positive_example: PaperId,
    pub negative_example: PaperId,
}

/// A paper whose true labels are known. `true` means the criterion applies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub paper_id: PaperId,
    pub labels: BTreeMap<CriterionId, bool>,
}

/// A worker's binary judgment on one (paper, criterion) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// "Out" vote: the criterion applies and the paper should be excluded.
    Applies,
    /// "In" vote.
    NotApplies,
}

impl Label {
    pub fn from_applies(applies: bool) -> Self {
        if applies {
            Label::Applies
        } else {
            Label::NotApplies
        }
    }

    pub fn applies(self) -> bool {
        matches!(self, Label::Applies)
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Applies => Label::NotApplies,
            Label::NotApplies => Label::Applies,
        }
    }

    /// Row/column index in confusion matrices: 0 = not applies, 1 = applies.
    pub fn index(self) -> usize {
        match self {
            Label::NotApplies => 0,
            Label::Applies => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Applies => "applies",
            Label::NotApplies => "not_applies",
        })
    }
}

/// How the platform classified a vote when it was ingested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteKind {
    /// Answers a pending vote request; moves the pair posterior.
    Candidate,
    /// Hidden test item inside a regular task. Billable.
    Honeypot,
    /// One of the entry test questions. Not billable.
    Qualification,
}

impl VoteKind {
    pub fn billable(self) -> bool {
        !matches!(self, VoteKind::Qualification)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub sequence_no: u64,
    pub worker_id: WorkerId,
    pub paper_id: PaperId,
    pub criterion_id: CriterionId,
    pub label: Label,
    pub kind: VoteKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperStatus {
    Undecided,
    ScreenedOut(CriterionId),
    Included,
    GivenUp,
}

impl PaperStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, PaperStatus::Undecided)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PaperStatus::Undecided => "undecided",
            PaperStatus::ScreenedOut(_) => "screened_out",
            PaperStatus::Included => "included",
            PaperStatus::GivenUp => "given_up",
        }
    }

    pub fn deciding_criterion(&self) -> Option<&CriterionId> {
        match self {
            PaperStatus::ScreenedOut(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperState {
    pub paper_id: PaperId,
    pub status: PaperStatus,
    pub exclusion_probability: f64,
}

/// Lifecycle of a project. Only moves forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    InitialRun,
    Adaptive,
    Finished,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::InitialRun => "initial_run",
            Phase::Adaptive => "adaptive",
            Phase::Finished => "finished",
        })
    }
}

/// One requested vote on a (paper, criterion) pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoteRequest {
    pub paper_id: PaperId,
    pub criterion_id: CriterionId,
}

impl VoteRequest {
    pub fn new(paper_id: PaperId, criterion_id: CriterionId) -> Self {
        Self {
            paper_id,
            criterion_id,
        }
    }
}
