use crowdscreen_core::{DomainError, StateError, ValidationError, VoteError};
use thiserror::Error;

use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unknown project {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{path}: {reason}")]
    Input { path: String, reason: String },
    #[error("project writer stopped")]
    Unavailable,
}

impl ServiceError {
    /// HTTP status for the error.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Validation(_)
            | ServiceError::Domain(_)
            | ServiceError::BadRequest(_)
            | ServiceError::Input { .. } => 400,
            ServiceError::State(StateError::Domain(_)) => 400,
            ServiceError::State(StateError::UnknownPaper(_)) => 404,
            ServiceError::State(_) => 409,
            ServiceError::Vote(VoteError::Forbidden(_)) => 403,
            ServiceError::Vote(VoteError::UnknownPaper(_) | VoteError::UnknownCriterion(_)) => 400,
            ServiceError::Vote(_) => 409,
            ServiceError::NotFound(_) | ServiceError::Store(StoreError::UnknownProject(_)) => 404,
            ServiceError::Store(StoreError::Exists(_)) => 409,
            ServiceError::Store(_) | ServiceError::Unavailable => 500,
        }
    }

    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Validation(_) => "validation",
            ServiceError::State(_) => "state",
            ServiceError::Vote(VoteError::Forbidden(_)) => "forbidden",
            ServiceError::Vote(VoteError::Duplicate { .. }) => "duplicate",
            ServiceError::Vote(_) => "vote",
            ServiceError::Domain(_) => "domain",
            ServiceError::Store(_) => "store",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Input { .. } => "input",
            ServiceError::Unavailable => "unavailable",
        }
    }

    /// CLI exit code: 1 for bad input, 2 for lifecycle and everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Validation(_)
            | ServiceError::Domain(_)
            | ServiceError::BadRequest(_)
            | ServiceError::Input { .. }
            | ServiceError::State(StateError::Domain(_))
            | ServiceError::Vote(VoteError::UnknownPaper(_) | VoteError::UnknownCriterion(_)) => 1,
            _ => 2,
        }
    }
}
