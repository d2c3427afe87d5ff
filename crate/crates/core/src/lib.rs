//! Adaptive crowd screening of candidate papers against exclusion criteria.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: papers, criteria, test items, votes, input parsing and the export document.
//! - [`bayes`]: per-pair posteriors, noisy-OR paper exclusion probability and the decision rule.
//! - [`strategy`]: Shortest Run scoring, ranking, initial-run planning and give-up rules.
//! - [`aggregation`]: majority vote and Dawid–Skene EM over a fixed vote matrix.
//! - [`crowdsim`]: simulated workers, quality control rules and the crowd driver.
//! - [`project`]: the [`project::ScreeningProject`] aggregate tying it all together.
//! - [`estimator`]: Monte Carlo budget curves, loss and the pareto front.

pub mod aggregation;
pub mod bayes;
pub mod crowdsim;
pub mod domain;
pub mod config;
pub mod error;
pub mod estimator;
pub mod project;
pub mod seed;
pub mod strategy;

pub use domain::{
    Cents, Criterion, CriterionId, Label, Paper, PaperId, PaperState, PaperStatus, Phase,
    TestItem, Vote, VoteKind, WorkerId,
};
pub use error::{DomainError, StateError, ValidationError, VoteError};
pub use project::ScreeningProject;
