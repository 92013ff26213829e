//! Repair-and-retrain: relabel discovered discriminatory pairs so both
//! members agree, retrain on the augmented training set and test again.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::generators::{run_generator, GenError, GeneratorSpec, TestSuite};
use crate::metrics::{fairness_report, model_quality, FairnessReport, GroupRule, MetricError, ModelQuality};
use crate::models::{train, Classifier, Model, ModelConfig, ModelError};
use crate::seed;

#[derive(Debug, Error)]
pub enum RetrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("runs must be at least 1")]
    NoRuns,
}

/// A generated sample with the label it should have been given.
pub type Correction = (Vec<i64>, u8);

/// Labels for the members of every verified pair in `suite`.
///
/// The anchor of a pair is its test-row member. When both members are test
/// rows the one predicted positive anchors; when neither is, the member
/// that belongs to the suite does (the first if both do). The non-anchor
/// member, or both members when neither is a test row, is emitted with the
/// anchor's predicted label. The first label given to a sample wins.
pub fn correct_pairs(suite: &TestSuite, model: &dyn Classifier) -> Vec<Correction> {
    let in_suite: HashSet<&[i64]> = suite.unique_samples.iter().map(Vec::as_slice).collect();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut out = Vec::new();
    let mut emit = |x: &Vec<i64>, y: u8, out: &mut Vec<Correction>| {
        if seen.insert(x.clone()) {
            out.push((x.clone(), y));
        }
    };
    for pair in &suite.idi_pairs {
        let la = model.label_of_codes(&pair.a);
        let lb = model.label_of_codes(&pair.b);
        match (pair.a_from_test, pair.b_from_test) {
            (true, false) => emit(&pair.b, la, &mut out),
            (false, true) => emit(&pair.a, lb, &mut out),
            (true, true) => {
                let y = la.max(lb);
                emit(&pair.a, y, &mut out);
                emit(&pair.b, y, &mut out);
            }
            (false, false) => {
                let y = if in_suite.contains(pair.a.as_slice()) || !in_suite.contains(pair.b.as_slice()) {
                    la
                } else {
                    lb
                };
                emit(&pair.a, y, &mut out);
                emit(&pair.b, y, &mut out);
            }
        }
    }
    out
}

/// What to regenerate when re-testing a model.
#[derive(Debug, Clone)]
pub struct RetestPlan<'a> {
    pub spec: &'a GeneratorSpec,
    pub sensitive: usize,
    /// Causal feature; `None` re-tests with the base search.
    pub causal: Option<usize>,
    pub rule: &'a GroupRule,
    pub budget: usize,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDelta {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub corrections: usize,
    /// One report per run for the original model.
    pub before: Vec<FairnessReport>,
    /// One report per run for the retrained model, same run seeds.
    pub after: Vec<FairnessReport>,
    pub quality_before: ModelQuality,
    pub quality_after: ModelQuality,
    /// `after - before`.
    pub quality_delta: QualityDelta,
}

/// Fairness reports for `plan.runs` seeded generations against `model`.
pub fn retest(
    model: &dyn Classifier,
    test_data: &Dataset,
    plan: &RetestPlan<'_>,
) -> Result<Vec<FairnessReport>, RetrainError> {
    if plan.runs == 0 {
        return Err(RetrainError::NoRuns);
    }
    (0..plan.runs)
        .into_par_iter()
        .map(|r| {
            let s = seed::derive(plan.seed, "retest", r as u64);
            let suite = run_generator(plan.spec, model, test_data, plan.sensitive, plan.causal, plan.budget, s)?;
            Ok(fairness_report(&suite, model, test_data, plan.rule)?)
        })
        .collect()
}

/// Trains a fresh model on `train_data` plus `corrections` and re-tests it
/// next to `model` on the same run seeds.
pub fn retrain_and_retest(
    config: &ModelConfig,
    model: &Model,
    train_data: &Dataset,
    corrections: &[Correction],
    test_data: &Dataset,
    plan: &RetestPlan<'_>,
) -> Result<(Model, RetrainOutcome), RetrainError> {
    let augmented = train_data.extended(corrections)?;
    let mut cfg = config.clone();
    cfg.seed = seed::derive(plan.seed, "retrain", 0);
    let retrained = train(&augmented, &cfg)?;
    let before = retest(model, test_data, plan)?;
    let after = retest(&retrained, test_data, plan)?;
    let qb = model_quality(model, test_data);
    let qa = model_quality(&retrained, test_data);
    let outcome = RetrainOutcome {
        corrections: corrections.len(),
        before,
        after,
        quality_before: qb,
        quality_after: qa,
        quality_delta: QualityDelta {
            accuracy: qa.accuracy - qb.accuracy,
            f1: qa.f1 - qb.f1,
            auc: qa.auc - qb.auc,
        },
    };
    Ok((retrained, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{Mode, Pair};

    /// Predicts positive iff the first feature is 1.
    fn model() -> Model {
        Model::logistic_from_weights(vec![10.0, 0.0], -5.0)
    }

    fn pair(a: Vec<i64>, b: Vec<i64>, a_from_test: bool, b_from_test: bool) -> Pair {
        Pair {
            a,
            b,
            a_from_test,
            b_from_test,
        }
    }

    fn suite(pairs: Vec<Pair>, samples: Vec<Vec<i64>>) -> TestSuite {
        let mut s = TestSuite::empty(Mode::Base, 0);
        s.origins = vec![0; samples.len()];
        s.unique_samples = samples;
        s.idi_pairs = pairs;
        s
    }

    #[test]
    fn test_member_anchors() {
        let p = pair(vec![1, 0], vec![0, 0], true, false);
        let out = correct_pairs(&suite(vec![p], vec![vec![0, 0]]), &model());
        assert_eq!(out, vec![(vec![0, 0], 1)]);
        let p = pair(vec![1, 3], vec![0, 3], false, true);
        let out = correct_pairs(&suite(vec![p], vec![vec![1, 3]]), &model());
        assert_eq!(out, vec![(vec![1, 3], 0)]);
    }

    #[test]
    fn positive_test_member_anchors_when_both_are_test_rows() {
        let p = pair(vec![0, 1], vec![1, 1], true, true);
        let out = correct_pairs(&suite(vec![p], vec![]), &model());
        assert_eq!(out, vec![(vec![0, 1], 1), (vec![1, 1], 1)]);
    }

    #[test]
    fn suite_member_anchors_generated_pairs() {
        let p = pair(vec![0, 2], vec![1, 2], false, false);
        let out = correct_pairs(&suite(vec![p.clone()], vec![vec![1, 2]]), &model());
        assert_eq!(out, vec![(vec![0, 2], 1), (vec![1, 2], 1)]);
        let out = correct_pairs(&suite(vec![p], vec![vec![0, 2], vec![1, 2]]), &model());
        assert_eq!(out, vec![(vec![0, 2], 0), (vec![1, 2], 0)]);
    }

    #[test]
    fn empty_and_duplicate_inputs() {
        assert!(correct_pairs(&suite(vec![], vec![]), &model()).is_empty());
        let p = pair(vec![1, 0], vec![0, 0], true, false);
        let q = pair(vec![0, 0], vec![1, 0], false, false);
        let out = correct_pairs(&suite(vec![p, q], vec![vec![0, 0]]), &model());
        assert_eq!(out, vec![(vec![0, 0], 1), (vec![1, 0], 0)]);
    }
}
