use crowdscreen_core::config::ProjectConfig;
use crowdscreen_core::crowdsim::{synthetic_project, CrowdModel};
use crowdscreen_core::domain::ProjectInputs;
use crowdscreen_core::estimator::{
    evaluate, run_trial, simulate_curves, trial_seed, Algorithm, SimulationTemplate,
};
use proptest::prelude::*;

const PAPERS: &str = "id,title,abstract\np1,One,First abstract\np2,Two,\"Second, quoted\"\n";
const CRITERIA: &str = r#"[{"id":"c1","text":"Not adults","positive_example":"p1","negative_example":"p2"}]"#;

fn tests_json(n: usize) -> String {
    let items: Vec<String> = (1..=n)
        .map(|i| format!(r#"{{"paper_id":"p{i}","labels":{{"c1":{}}}}}"#, i == 1))
        .collect();
    format!("[{}]", items.join(","))
}

fn papers_csv(n: usize) -> String {
    let mut s = String::from("id,title,abstract\n");
    for i in 1..=n {
        s.push_str(&format!("p{i},Title {i},Abstract {i}\n"));
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    // Any edit either yields a fully valid project or a structured error.
    #[test]
    fn validation_is_total(cut in 0usize..400, insert in "[,\"\n a-z{}:\\[\\]]{0,6}", which in 0u8..3) {
        let papers = papers_csv(12);
        let tests = tests_json(12);
        let mangle = |s: &str| {
            let at = cut.min(s.len());
            let at = (0..=at).rev().find(|&i| s.is_char_boundary(i)).unwrap_or(0);
            format!("{}{}{}", &s[..at], insert, &s[at..])
        };
        let (p, c, t) = match which {
            0 => (mangle(&papers), CRITERIA.to_string(), tests.clone()),
            1 => (papers.clone(), mangle(CRITERIA), tests.clone()),
            _ => (papers.clone(), CRITERIA.to_string(), mangle(&tests)),
        };
        match ProjectInputs::parse(&p, &c, &t) {
            Ok(inputs) => {
                prop_assert!(inputs.test_items.len() >= 10);
                prop_assert!(!inputs.criteria.is_empty());
                let again = ProjectInputs::new(inputs.papers.clone(), inputs.criteria.clone(), inputs.test_items.clone());
                prop_assert_eq!(again, Ok(inputs));
            }
            Err(e) => prop_assert!(!e.to_string().is_empty()),
        }
    }
}

#[test]
fn small_inputs_report_the_offending_document() {
    let err = ProjectInputs::parse(PAPERS, CRITERIA, "[]").unwrap_err();
    assert!(err.to_string().contains("test items"), "{err}");
    let err = ProjectInputs::parse(&papers_csv(12), "{", &tests_json(12)).unwrap_err();
    assert!(err.to_string().contains("criteria"), "{err}");
}

fn small_template() -> SimulationTemplate {
    let (inputs, _) = synthetic_project(30, &[0.4], 10, 2).unwrap();
    SimulationTemplate::new(inputs, ProjectConfig::default())
}

#[test]
fn mean_recall_does_not_drop_with_budget() {
    let template = small_template();
    let crowd = CrowdModel::point(20, 0.85, 4);
    let checkpoints = [40, 70, 100, 130];
    let algorithms = [Algorithm::ShortestRun, Algorithm::fixed_j(3)];
    let points = simulate_curves(&template, &crowd, &algorithms, &checkpoints, 50, 17).unwrap();
    for alg in algorithms {
        let curve: Vec<_> = points.iter().filter(|p| p.algorithm == alg).collect();
        assert_eq!(curve.len(), checkpoints.len());
        for w in curve.windows(2) {
            let (a, b) = (w[0], w[1]);
            let se = (a.recall_std_error.powi(2) + b.recall_std_error.powi(2)).sqrt();
            assert!(
                b.recall >= a.recall - 2.0 * se,
                "{alg}: recall {} at {} vs {} at {} (se {se})",
                b.recall,
                b.budget_votes,
                a.recall,
                a.budget_votes
            );
        }
    }
}

#[test]
fn curve_points_match_independent_sequential_trials() {
    let template = small_template();
    let crowd = CrowdModel::point(20, 0.85, 4);
    let both = simulate_curves(&template, &crowd, &[Algorithm::ShortestRun, Algorithm::fixed_j(3)], &[50, 90], 4, 3).unwrap();
    let alone = simulate_curves(&template, &crowd, &[Algorithm::fixed_j(3)], &[90], 4, 3).unwrap();
    let from_both = both.iter().find(|p| p.algorithm == Algorithm::fixed_j(3) && p.budget_votes == 90).unwrap();
    assert_eq!(from_both, &alone[0]);

    for point in &both {
        let mut recall = 0.0;
        let mut loss = 0.0;
        for t in 0..4 {
            let seed = trial_seed(3, point.algorithm, point.budget_votes, t);
            let (result, truth) = run_trial(&template, &crowd, point.algorithm, Some(point.budget_votes), seed).unwrap();
            let m = evaluate(&result.outcomes, &truth, template.config.strategy.loss_ratio);
            recall += m.recall;
            loss += m.loss;
        }
        assert_eq!(point.recall, recall / 4.0);
        assert_eq!(point.loss, loss / 4.0);
    }
}
