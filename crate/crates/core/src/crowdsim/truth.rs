use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Criterion, CriterionId, Label, Paper, PaperId, ProjectInputs, TestItem};
use crate::error::DomainError;
use crate::seed;

/// Whether each criterion truly applies to each paper. Simulation-side only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: BTreeMap<PaperId, BTreeMap<CriterionId, bool>>,
}

impl GroundTruth {
    /// Samples truth for every pair: gold labels where the test items carry
    /// one, otherwise Bernoulli(selectivity) per criterion.
    pub fn sample<R: Rng>(inputs: &ProjectInputs, selectivity: &BTreeMap<CriterionId, f64>, rng: &mut R) -> Self {
        let mut labels = BTreeMap::new();
        for paper in &inputs.papers {
            let mut row = BTreeMap::new();
            for criterion in &inputs.criteria {
                let applies = match inputs.test_label(&paper.id, &criterion.id) {
                    Some(gold) => gold,
                    None => rng.gen::<f64>() < selectivity.get(&criterion.id).copied().unwrap_or(0.35),
                };
                row.insert(criterion.id.clone(), applies);
            }
            labels.insert(paper.id.clone(), row);
        }
        Self { labels }
    }

    pub fn applies(&self, paper: &PaperId, criterion: &CriterionId) -> bool {
        self.labels
            .get(paper)
            .and_then(|row| row.get(criterion))
            .copied()
            .unwrap_or(false)
    }

    pub fn label(&self, paper: &PaperId, criterion: &CriterionId) -> Label {
        Label::from_applies(self.applies(paper, criterion))
    }

    /// A paper should be excluded when at least one criterion applies.
    pub fn excluded(&self, paper: &PaperId) -> bool {
        self.labels.get(paper).is_some_and(|row| row.values().any(|&v| v))
    }
}

/// Generates a synthetic project: papers `p000…`, criteria `c1…` with the
/// given selectivities, and the first `tests` papers as gold test items.
///
/// The first two test papers are forced to applies / not-applies for every
/// criterion so each criterion has its positive and negative example.
pub fn synthetic_project(
    papers: usize,
    selectivities: &[f64],
    tests: usize,
    master_seed: u64,
) -> Result<(ProjectInputs, GroundTruth), DomainError> {
    if tests < 2 || tests > papers {
        return Err(DomainError::Invalid(format!("need 2 <= tests <= papers, got {tests} of {papers}")));
    }
    if selectivities.is_empty() {
        return Err(DomainError::Empty("selectivities"));
    }
    let mut rng = seed::rng_for(master_seed, "synthetic-project", 0);
    let criterion_ids: Vec<CriterionId> = (1..=selectivities.len()).map(|i| CriterionId::new(format!("c{i}"))).collect();
    let paper_list: Vec<Paper> = (0..papers)
        .map(|i| Paper {
            id: PaperId::new(format!("p{i:03}")),
            title: format!("Synthetic paper {i}"),
            abstract_text: format!("Abstract of synthetic paper {i}."),
        })
        .collect();

    let mut truth = GroundTruth::default();
    for (i, paper) in paper_list.iter().enumerate() {
        let row = criterion_ids
            .iter()
            .zip(selectivities)
            .map(|(c, &s)| {
                let applies = match i {
                    0 => true,
                    1 => false,
                    _ => rng.gen::<f64>() < s,
                };
                (c.clone(), applies)
            })
            .collect();
        truth.labels.insert(paper.id.clone(), row);
    }

    let test_items: Vec<TestItem> = paper_list[..tests]
        .iter()
        .map(|p| TestItem {
            paper_id: p.id.clone(),
            labels: truth.labels[&p.id].clone(),
        })
        .collect();
    let criteria = criterion_ids
        .iter()
        .map(|c| Criterion {
            id: c.clone(),
            text: format!("Does criterion {c} apply?"),
            positive_example: paper_list[0].id.clone(),
            negative_example: paper_list[1].id.clone(),
        })
        .collect();

    let inputs = ProjectInputs::new(paper_list, criteria, test_items)
        .map_err(|e| DomainError::Invalid(format!("synthetic inputs invalid: {e}")))?;
    Ok((inputs, truth))
}
