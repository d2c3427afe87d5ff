use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Criterion, CriterionId, Paper, PaperId, TestItem};
use crate::error::ValidationError;

/// Minimum number of gold-labelled test items a project must upload.
pub const MIN_TEST_ITEMS: usize = 10;

const PAPERS_HEADER: [&str; 3] = ["id", "title", "abstract"];

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

/// Parses `papers.csv` (header `id,title,abstract`, RFC-4180 quoting).
///
/// Row numbers in errors count the header as row 1.
pub fn load_papers(csv_text: &str) -> Result<Vec<Paper>, ValidationError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|_| ValidationError::MissingHeader)?
        .clone();
    let header_ok = headers.len() == PAPERS_HEADER.len()
        && headers
            .iter()
            .zip(PAPERS_HEADER)
            .all(|(got, want)| got.trim() == want);
    if !header_ok {
        return Err(ValidationError::MissingHeader);
    }

    let mut papers = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, record) in reader.records().enumerate() {
        let row = index + 2;
        let record = record.map_err(|e| ValidationError::Row {
            row,
            reason: e.to_string(),
        })?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_owned();
        let (id, title, abstract_text) = (field(0), field(1), field(2));
        if !is_token(&id) {
            return Err(ValidationError::Row {
                row,
                reason: format!("invalid id {id:?}"),
            });
        }
        if title.is_empty() {
            return Err(ValidationError::Row {
                row,
                reason: "empty title".into(),
            });
        }
        if abstract_text.is_empty() {
            return Err(ValidationError::Row {
                row,
                reason: "empty abstract".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(ValidationError::Row {
                row,
                reason: format!("duplicate id {id}"),
            });
        }
        papers.push(Paper {
            id: PaperId::new(id),
            title,
            abstract_text,
        });
    }
    Ok(papers)
}

/// Parses `criteria.json`: an array of `{"id","text","positive_example","negative_example"}`.
pub fn load_criteria(json: &str) -> Result<Vec<Criterion>, ValidationError> {
    serde_json::from_str(json).map_err(|e| ValidationError::Malformed {
        document: "criteria.json",
        reason: e.to_string(),
    })
}

/// Parses `tests.json`: an array of `{"paper_id","labels":{criterion_id: bool}}`.
pub fn load_test_items(json: &str) -> Result<Vec<TestItem>, ValidationError> {
    serde_json::from_str(json).map_err(|e| ValidationError::Malformed {
        document: "tests.json",
        reason: e.to_string(),
    })
}

/// Cross-validated project inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectInputs {
    pub papers: Vec<Paper>,
    pub criteria: Vec<Criterion>,
    pub test_items: Vec<TestItem>,
}

impl ProjectInputs {
    pub fn new(
        papers: Vec<Paper>,
        criteria: Vec<Criterion>,
        test_items: Vec<TestItem>,
    ) -> Result<Self, ValidationError> {
        let mut paper_ids = BTreeSet::new();
        for (index, paper) in papers.iter().enumerate() {
            if !is_token(paper.id.as_str()) {
                return Err(field_err("papers", index, format!("invalid id {:?}", paper.id.as_str())));
            }
            if paper.title.trim().is_empty() || paper.abstract_text.trim().is_empty() {
                return Err(field_err("papers", index, "empty title or abstract".into()));
            }
            if !paper_ids.insert(paper.id.clone()) {
                return Err(field_err("papers", index, format!("duplicate id {}", paper.id)));
            }
        }

        if criteria.is_empty() {
            return Err(ValidationError::Malformed {
                document: "criteria.json",
                reason: "at least one criterion is required".into(),
            });
        }
        let mut criterion_ids = BTreeSet::new();
        for (index, c) in criteria.iter().enumerate() {
            if !is_token(c.id.as_str()) {
                return Err(field_err("criteria.json", index, format!("invalid id {:?}", c.id.as_str())));
            }
            if c.text.trim().is_empty() {
                return Err(field_err("criteria.json", index, "empty text".into()));
            }
            if !criterion_ids.insert(c.id.clone()) {
                return Err(field_err("criteria.json", index, format!("duplicate id {}", c.id)));
            }
        }

        let mut labels_by_paper: BTreeMap<&PaperId, &BTreeMap<CriterionId, bool>> = BTreeMap::new();
        for (index, item) in test_items.iter().enumerate() {
            if !paper_ids.contains(&item.paper_id) {
                return Err(field_err("tests.json", index, format!("unknown paper {}", item.paper_id)));
            }
            if let Some(unknown) = item.labels.keys().find(|c| !criterion_ids.contains(*c)) {
                return Err(field_err("tests.json", index, format!("unknown criterion {unknown}")));
            }
            if labels_by_paper.insert(&item.paper_id, &item.labels).is_some() {
                return Err(field_err("tests.json", index, format!("duplicate test item {}", item.paper_id)));
            }
        }
        if test_items.len() < MIN_TEST_ITEMS {
            return Err(ValidationError::TooFewTestItems {
                min: MIN_TEST_ITEMS,
                got: test_items.len(),
            });
        }

        for (index, c) in criteria.iter().enumerate() {
            if c.positive_example == c.negative_example {
                return Err(field_err("criteria.json", index, "positive_example equals negative_example".into()));
            }
            let check = |example: &PaperId, want: bool, role: &str| -> Result<(), ValidationError> {
                match labels_by_paper.get(example).and_then(|labels| labels.get(&c.id)) {
                    Some(&label) if label == want => Ok(()),
                    Some(_) => Err(field_err(
                        "criteria.json",
                        index,
                        format!("{role} {example} is labelled {} for {}", if want { "not-applies" } else { "applies" }, c.id),
                    )),
                    None => Err(field_err(
                        "criteria.json",
                        index,
                        format!("{role} {example} is not a test item labelled for {}", c.id),
                    )),
                }
            };
            check(&c.positive_example, true, "positive_example")?;
            check(&c.negative_example, false, "negative_example")?;
        }

        Ok(Self {
            papers,
            criteria,
            test_items,
        })
    }

    /// Parses and validates the three upload documents.
    pub fn parse(papers_csv: &str, criteria_json: &str, tests_json: &str) -> Result<Self, ValidationError> {
        Self::new(
            load_papers(papers_csv)?,
            load_criteria(criteria_json)?,
            load_test_items(tests_json)?,
        )
    }

    pub fn test_label(&self, paper: &PaperId, criterion: &CriterionId) -> Option<bool> {
        self.test_items
            .iter()
            .find(|t| &t.paper_id == paper)
            .and_then(|t| t.labels.get(criterion).copied())
    }
}

fn field_err(document: &'static str, index: usize, reason: String) -> ValidationError {
    ValidationError::Field {
        document,
        index,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,title,abstract\n";

    #[test]
    fn parses_single_row() {
        let papers = load_papers(&format!("{HEADER}p1,Tech for elders,Abstract text\n")).unwrap();
        assert_eq!(papers.len(), 1);
        assert_eq!(papers[0].id.as_str(), "p1");
        assert_eq!(papers[0].title, "Tech for elders");
        assert_eq!(papers[0].abstract_text, "Abstract text");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(load_papers(HEADER).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_reports_row_three() {
        let err = load_papers(&format!("{HEADER}p1,A,B\np1,C,D\n")).unwrap_err();
        assert!(matches!(err, ValidationError::Row { row: 3, .. }), "{err:?}");
    }

    #[test]
    fn missing_header_rejected() {
        assert_eq!(load_papers("p1,A,B\n").unwrap_err(), ValidationError::MissingHeader);
        assert_eq!(load_papers("").unwrap_err(), ValidationError::MissingHeader);
    }

    #[test]
    fn trims_and_honours_quotes() {
        let papers = load_papers(&format!("{HEADER} p2 ,\"Title, with comma\",\"Multi\nline \"\"quoted\"\"\"\n")).unwrap();
        assert_eq!(papers[0].id.as_str(), "p2");
        assert_eq!(papers[0].title, "Title, with comma");
        assert_eq!(papers[0].abstract_text, "Multi\nline \"quoted\"");
    }

    #[test]
    fn blank_fields_rejected() {
        let err = load_papers(&format!("{HEADER}p1,  ,B\n")).unwrap_err();
        assert!(matches!(err, ValidationError::Row { row: 2, .. }));
        let err = load_papers(&format!("{HEADER}p1,A,B\np2,A, \n")).unwrap_err();
        assert!(matches!(err, ValidationError::Row { row: 3, .. }));
    }

    #[test]
    fn ragged_row_rejected() {
        let err = load_papers(&format!("{HEADER}p1,A\n")).unwrap_err();
        assert!(matches!(err, ValidationError::Row { row: 2, .. }));
    }
}
