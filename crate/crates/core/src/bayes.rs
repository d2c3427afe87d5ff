//! Per-pair posteriors, paper-level exclusion probability and the decision rule.
//!
//! Each (paper, criterion) pair is a two-state model: the criterion applies
//! with prior probability equal to the criterion's selectivity, and every
//! crowd vote matches the truth with the criterion's crowd accuracy.

use serde::{Deserialize, Serialize};

use crate::domain::CriterionId;
use crate::error::DomainError;

fn check_probability(name: &'static str, value: f64) -> Result<(), DomainError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(DomainError::out_of_range(name, value, "[0,1]"))
    }
}

fn logistic(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// Posterior probability that the criterion applies after `out_votes`
/// "applies" and `in_votes` "not applies" votes.
///
/// Evaluated as prior log-odds plus `(out − in) · ln(a / (1 − a))`, so long
/// vote runs never underflow.
pub fn pair_posterior(prior: f64, accuracy: f64, out_votes: u32, in_votes: u32) -> Result<f64, DomainError> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(DomainError::out_of_range("prior", prior, "(0,1)"));
    }
    if !(accuracy > 0.0 && accuracy < 1.0) {
        return Err(DomainError::out_of_range("accuracy", accuracy, "(0,1)"));
    }
    let prior_log_odds = prior.ln() - (-prior).ln_1p();
    let vote_log_ratio = accuracy.ln() - (-accuracy).ln_1p();
    let net = f64::from(out_votes) - f64::from(in_votes);
    Ok(logistic(prior_log_odds + net * vote_log_ratio))
}

/// Probability the paper should be screened out, combining per-criterion
/// posteriors with a noisy-OR under criterion independence.
pub fn paper_exclusion_probability(pair_posteriors: &[f64]) -> Result<f64, DomainError> {
    if pair_posteriors.is_empty() {
        return Err(DomainError::Empty("pair posteriors"));
    }
    let mut stay = 1.0;
    for &p in pair_posteriors {
        check_probability("posterior", p)?;
        stay *= 1.0 - p;
    }
    Ok(1.0 - stay)
}

/// Probability that the next crowd vote on the pair is an "applies" vote.
pub fn predicted_out_vote_probability(posterior: f64, accuracy: f64) -> Result<f64, DomainError> {
    check_probability("posterior", posterior)?;
    check_probability("accuracy", accuracy)?;
    Ok(posterior * accuracy + (1.0 - posterior) * (1.0 - accuracy))
}

/// Thresholds of the paper-level decision rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionRule {
    pub theta_out: f64,
    pub theta_in: f64,
    pub min_votes_for_include: u32,
}

/// What the rule sees of one criterion on one paper.
#[derive(Clone, Copy, Debug)]
pub struct CriterionEvidence<'a> {
    pub criterion_id: &'a CriterionId,
    pub posterior: f64,
    pub votes: u32,
    pub given_up: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    ScreenOut(CriterionId),
    Include,
    None,
}

/// Applies the decision rule to one paper's evidence.
///
/// Screen out when the noisy-OR exclusion probability exceeds `theta_out`,
/// naming the criterion with the highest posterior (ties go to the lowest
/// id). Include when every criterion not given up sits below `theta_in` with
/// at least `min_votes_for_include` votes; a paper whose criteria were all
/// given up is never included.
pub fn decide(evidence: &[CriterionEvidence<'_>], rule: &DecisionRule) -> Result<(Decision, f64), DomainError> {
    let posteriors: Vec<f64> = evidence.iter().map(|e| e.posterior).collect();
    let p_out = paper_exclusion_probability(&posteriors)?;
    if p_out > rule.theta_out {
        let decisive = evidence
            .iter()
            .max_by(|a, b| {
                a.posterior
                    .total_cmp(&b.posterior)
                    .then_with(|| b.criterion_id.cmp(a.criterion_id))
            })
            .expect("non-empty evidence");
        return Ok((Decision::ScreenOut(decisive.criterion_id.clone()), p_out));
    }
    let mut active = evidence.iter().filter(|e| !e.given_up).peekable();
    if active.peek().is_none() {
        return Ok((Decision::None, p_out));
    }
    let include = active.all(|e| e.posterior < rule.theta_in && e.votes >= rule.min_votes_for_include);
    Ok((if include { Decision::Include } else { Decision::None }, p_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Joint-probability oracle: sums the likelihood of an explicit vote
    /// sequence over both truth states, independent of the log-odds route.
    fn enumerated_posterior(prior: f64, accuracy: f64, votes: &[bool]) -> f64 {
        let mut applies = prior;
        let mut not_applies = 1.0 - prior;
        for &out in votes {
            applies *= if out { accuracy } else { 1.0 - accuracy };
            not_applies *= if out { 1.0 - accuracy } else { accuracy };
        }
        applies / (applies + not_applies)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_out_votes_example() {
        let p = pair_posterior(0.3, 0.8, 2, 0).unwrap();
        let oracle = enumerated_posterior(0.3, 0.8, &[true, true]);
        assert!(close(oracle, 0.192 / (0.192 + 0.028), 1e-15));
        assert!(close(p, oracle, 1e-12));
        assert!(close(p, 0.872727, 1e-6));
    }

    #[test]
    fn no_evidence_identity_and_cancellation() {
        for &prior in &[0.1, 0.3, 0.5, 0.77] {
            for &a in &[0.6, 0.8, 0.95] {
                assert!(close(pair_posterior(prior, a, 0, 0).unwrap(), prior, 1e-12));
            }
        }
        assert!(close(pair_posterior(0.3, 0.8, 1, 1).unwrap(), 0.3, 1e-12));
    }

    #[test]
    fn domain_errors() {
        assert!(pair_posterior(0.3, 1.0, 1, 0).is_err());
        assert!(pair_posterior(0.3, 0.0, 1, 0).is_err());
        assert!(pair_posterior(0.0, 0.8, 1, 0).is_err());
        assert!(paper_exclusion_probability(&[]).is_err());
        assert!(paper_exclusion_probability(&[1.2]).is_err());
        assert!(predicted_out_vote_probability(0.5, -0.1).is_err());
    }

    #[test]
    fn long_runs_do_not_underflow() {
        let p = pair_posterior(0.3, 0.9, 400, 0).unwrap();
        assert_eq!(p, 1.0);
        let q = pair_posterior(0.3, 0.9, 0, 300).unwrap();
        assert!(q > 0.0 && q < 1e-280);
        let r = pair_posterior(0.3, 0.9, 1000, 999).unwrap();
        assert!(close(r, pair_posterior(0.3, 0.9, 1, 0).unwrap(), 1e-12));
    }

    #[test]
    fn noisy_or_examples() {
        // Two-criterion enumeration: P(at least one applies) under independence.
        let (a, b) = (0.9, 0.5);
        let enumerated = a * b + a * (1.0 - b) + (1.0 - a) * b;
        assert!(close(enumerated, 0.95, 1e-15));
        assert!(close(paper_exclusion_probability(&[a, b]).unwrap(), enumerated, 1e-12));
        assert_eq!(paper_exclusion_probability(&[0.0, 0.0]).unwrap(), 0.0);
        for &x in &[0.0, 0.3, 1.0] {
            assert_eq!(paper_exclusion_probability(&[1.0, x]).unwrap(), 1.0);
        }
    }

    #[test]
    fn predicted_vote_examples() {
        // Marginalize the two-state model: P(out) = Σ_truth P(truth) P(out | truth).
        let marginal = 0.3 * 0.8 + 0.7 * (1.0 - 0.8);
        assert!(close(marginal, 0.38, 1e-15));
        assert!(close(predicted_out_vote_probability(0.3, 0.8).unwrap(), marginal, 1e-12));
        assert_eq!(predicted_out_vote_probability(1.0, 0.83).unwrap(), 0.83);
        for &p in &[0.0, 0.2, 0.9] {
            assert!(close(predicted_out_vote_probability(p, 0.5).unwrap(), 0.5, 1e-15));
        }
    }

    fn rule() -> DecisionRule {
        DecisionRule {
            theta_out: 0.99,
            theta_in: 0.01,
            min_votes_for_include: 3,
        }
    }

    fn ev<'a>(id: &'a CriterionId, posterior: f64, votes: u32) -> CriterionEvidence<'a> {
        CriterionEvidence {
            criterion_id: id,
            posterior,
            votes,
            given_up: false,
        }
    }

    #[test]
    fn decision_examples() {
        let (c1, c2) = (CriterionId::from("c1"), CriterionId::from("c2"));
        let (d, p_out) = decide(&[ev(&c1, 0.995, 4), ev(&c2, 0.2, 1)], &rule()).unwrap();
        assert!(close(p_out, 1.0 - 0.005 * 0.8, 1e-12));
        assert_eq!(d, Decision::ScreenOut(c1.clone()));

        let (d, _) = decide(&[ev(&c1, 0.005, 3), ev(&c2, 0.004, 3)], &rule()).unwrap();
        assert_eq!(d, Decision::Include);

        let (d, _) = decide(&[ev(&c1, 0.5, 3), ev(&c2, 0.5, 3)], &rule()).unwrap();
        assert_eq!(d, Decision::None);
    }

    #[test]
    fn include_needs_votes_and_an_active_criterion() {
        let (c1, c2) = (CriterionId::from("c1"), CriterionId::from("c2"));
        let (d, _) = decide(&[ev(&c1, 0.005, 2), ev(&c2, 0.004, 3)], &rule()).unwrap();
        assert_eq!(d, Decision::None);

        let mut gone = ev(&c1, 0.4, 0);
        gone.given_up = true;
        let (d, _) = decide(&[gone, ev(&c2, 0.004, 3)], &rule()).unwrap();
        assert_eq!(d, Decision::Include);

        let mut gone2 = ev(&c2, 0.004, 3);
        gone2.given_up = true;
        let (d, _) = decide(&[gone, gone2], &rule()).unwrap();
        assert_eq!(d, Decision::None);
    }

    #[test]
    fn screen_out_tie_breaks_to_lowest_id() {
        let (a, b) = (CriterionId::from("a"), CriterionId::from("b"));
        let (d, _) = decide(&[ev(&b, 0.95, 3), ev(&a, 0.95, 3)], &rule()).unwrap();
        assert_eq!(d, Decision::ScreenOut(a));
    }

    #[test]
    fn grid_matches_enumeration_oracle() {
        let priors: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let accuracies = [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
        let mut worst: f64 = 0.0;
        for &prior in &priors {
            for &a in &accuracies {
                for len in 0..=4usize {
                    for mask in 0..(1u32 << len) {
                        let votes: Vec<bool> = (0..len).map(|k| mask & (1 << k) != 0).collect();
                        let outs = votes.iter().filter(|&&v| v).count() as u32;
                        let p = pair_posterior(prior, a, outs, len as u32 - outs).unwrap();
                        worst = worst.max((p - enumerated_posterior(prior, a, &votes)).abs());
                    }
                }
            }
        }
        assert!(worst <= 1e-12, "max abs error {worst}");
    }

    proptest! {
        #[test]
        fn monotone_in_votes(prior in 0.01f64..0.99, a in 0.51f64..0.99, o in 0u32..30, i in 0u32..30) {
            let base = pair_posterior(prior, a, o, i).unwrap();
            let more_out = pair_posterior(prior, a, o + 1, i).unwrap();
            let more_in = pair_posterior(prior, a, o, i + 1).unwrap();
            // Strict while the posterior is representable away from 0 and 1.
            if base > 1e-12 && base < 1.0 - 1e-12 {
                prop_assert!(more_out > base);
                prop_assert!(more_in < base);
            } else {
                prop_assert!(more_out >= base);
                prop_assert!(more_in <= base);
            }
        }

        #[test]
        fn exchangeable(prior in 0.01f64..0.99, a in 0.51f64..0.99, votes in proptest::collection::vec(any::<bool>(), 0..12)) {
            let outs = votes.iter().filter(|&&v| v).count() as u32;
            let ins = votes.len() as u32 - outs;
            let mut reversed = votes.clone();
            reversed.reverse();
            let p = pair_posterior(prior, a, outs, ins).unwrap();
            prop_assert!((p - enumerated_posterior(prior, a, &votes)).abs() < 1e-12);
            prop_assert!((p - enumerated_posterior(prior, a, &reversed)).abs() < 1e-12);
        }

        #[test]
        fn dominance(ps in proptest::collection::vec(0.0f64..=1.0, 1..6)) {
            let p_out = paper_exclusion_probability(&ps).unwrap();
            let max = ps.iter().cloned().fold(0.0, f64::max);
            prop_assert!(p_out >= max - 1e-15);
            prop_assert!(p_out <= 1.0);
        }
    }
}
