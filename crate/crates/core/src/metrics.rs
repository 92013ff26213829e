//! Individual fairness (IDI ratio), group fairness (EOD, SPD) and model
//! quality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Schema};
use crate::generators::TestSuite;
use crate::models::Classifier;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("suite has no samples")]
    EmptySuite,
    #[error("group {0} has no rows")]
    MissingGroup(&'static str),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid group rule: {0}")]
    InvalidRule(String),
    #[error("{samples} samples but {labels} labels")]
    LengthMismatch { samples: usize, labels: usize },
}

/// How a sensitive feature splits rows into the two groups `alpha` and
/// `beta`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupRule {
    /// Rows whose code is in `alpha` against all others.
    Values { feature: String, alpha: Vec<i64> },
    /// Rows with `lo <= value <= hi` against all others.
    Range { feature: String, lo: i64, hi: i64 },
}

impl GroupRule {
    pub fn values(feature: impl Into<String>, alpha: Vec<i64>) -> Self {
        GroupRule::Values {
            feature: feature.into(),
            alpha,
        }
    }

    pub fn range(feature: impl Into<String>, lo: i64, hi: i64) -> Result<Self, MetricError> {
        if lo > hi {
            return Err(MetricError::InvalidRule(format!("range [{lo}, {hi}] is empty")));
        }
        Ok(GroupRule::Range {
            feature: feature.into(),
            lo,
            hi,
        })
    }

    /// Default split for `feature`: the lower code of a two-value domain,
    /// otherwise the most frequent code, forms group alpha.
    pub fn default_for(data: &Dataset, feature: &str) -> Result<Self, MetricError> {
        let j = data
            .schema()
            .index_of(feature)
            .map_err(|_| MetricError::UnknownFeature(feature.to_string()))?;
        let domain = data.domain(j);
        if domain.len() == 2 {
            return Ok(GroupRule::values(feature, vec![domain.min()]));
        }
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for v in data.column(j) {
            *counts.entry(v).or_default() += 1;
        }
        let majority = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&v, _)| v)
            .ok_or_else(|| MetricError::InvalidRule(format!("{feature} has no values")))?;
        Ok(GroupRule::values(feature, vec![majority]))
    }

    pub fn feature(&self) -> &str {
        match self {
            GroupRule::Values { feature, .. } | GroupRule::Range { feature, .. } => feature,
        }
    }

    pub fn in_alpha(&self, value: i64) -> bool {
        match self {
            GroupRule::Values { alpha, .. } => alpha.contains(&value),
            GroupRule::Range { lo, hi, .. } => (*lo..=*hi).contains(&value),
        }
    }

    fn index(&self, schema: &Schema) -> Result<usize, MetricError> {
        if let GroupRule::Range { lo, hi, .. } = self {
            if lo > hi {
                return Err(MetricError::InvalidRule(format!("range [{lo}, {hi}] is empty")));
            }
        }
        schema
            .index_of(self.feature())
            .map_err(|_| MetricError::UnknownFeature(self.feature().to_string()))
    }
}

/// Indices of the alpha and beta groups.
pub fn group_split(
    samples: &[Vec<i64>],
    schema: &Schema,
    rule: &GroupRule,
) -> Result<(Vec<usize>, Vec<usize>), MetricError> {
    let j = rule.index(schema)?;
    Ok((0..samples.len()).partition(|&i| rule.in_alpha(samples[i][j])))
}

pub fn idi_ratio(suite: &TestSuite) -> Result<f64, MetricError> {
    if suite.unique_samples.is_empty() {
        return Err(MetricError::EmptySuite);
    }
    Ok(suite.idi_samples.len() as f64 / suite.unique_samples.len() as f64)
}

fn positive_rate(model: &dyn Classifier, samples: &[Vec<i64>], idx: &[usize]) -> f64 {
    let pos = idx.iter().filter(|&&i| model.label_of_codes(&samples[i]) == 1).count();
    pos as f64 / idx.len() as f64
}

/// Gap in predicted-positive rate between the groups.
pub fn spd(
    samples: &[Vec<i64>],
    model: &dyn Classifier,
    schema: &Schema,
    rule: &GroupRule,
) -> Result<f64, MetricError> {
    let (alpha, beta) = group_split(samples, schema, rule)?;
    if alpha.is_empty() {
        return Err(MetricError::MissingGroup("alpha"));
    }
    if beta.is_empty() {
        return Err(MetricError::MissingGroup("beta"));
    }
    Ok((positive_rate(model, samples, &alpha) - positive_rate(model, samples, &beta)).abs())
}

/// Gap in predicted-positive rate between the groups among rows whose true
/// label is 1.
pub fn eod(
    samples: &[Vec<i64>],
    labels: &[u8],
    model: &dyn Classifier,
    schema: &Schema,
    rule: &GroupRule,
) -> Result<f64, MetricError> {
    if samples.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            samples: samples.len(),
            labels: labels.len(),
        });
    }
    let (alpha, beta) = group_split(samples, schema, rule)?;
    let alpha: Vec<usize> = alpha.into_iter().filter(|&i| labels[i] == 1).collect();
    let beta: Vec<usize> = beta.into_iter().filter(|&i| labels[i] == 1).collect();
    if alpha.is_empty() {
        return Err(MetricError::MissingGroup("alpha"));
    }
    if beta.is_empty() {
        return Err(MetricError::MissingGroup("beta"));
    }
    Ok((positive_rate(model, samples, &alpha) - positive_rate(model, samples, &beta)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub idi_ratio: f64,
    /// `None` when a group has no positive rows.
    pub eod: Option<f64>,
    /// `None` when a group is empty.
    pub spd: Option<f64>,
    /// Unique discriminatory samples.
    pub idis: usize,
    /// Unique samples.
    pub samples: usize,
}

/// All three metrics for a suite. Each generated sample takes the true
/// label of the test row it was seeded from.
pub fn fairness_report(
    suite: &TestSuite,
    model: &dyn Classifier,
    test_data: &Dataset,
    rule: &GroupRule,
) -> Result<FairnessReport, MetricError> {
    let idi = idi_ratio(suite)?;
    let labels: Vec<u8> = suite.origins.iter().map(|&o| test_data.label(o)).collect();
    let schema = test_data.schema();
    let soft = |r: Result<f64, MetricError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricError::MissingGroup(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(FairnessReport {
        idi_ratio: idi,
        eod: soft(eod(&suite.unique_samples, &labels, model, schema, rule))?,
        spd: soft(spd(&suite.unique_samples, model, schema, rule))?,
        idis: suite.idi_samples.len(),
        samples: suite.unique_samples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelQuality {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
}

/// Accuracy, F1 of the positive class and ROC AUC (ties count half).
pub fn model_quality(model: &dyn Classifier, data: &Dataset) -> ModelQuality {
    let probs: Vec<f64> = data
        .rows()
        .map(|r| {
            let x: Vec<f64> = r.iter().map(|&c| c as f64).collect();
            model.probability(&x)
        })
        .collect();
    let labels = data.labels();
    let (mut tp, mut fp, mut fn_, mut correct) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &y) in probs.iter().zip(labels) {
        let yhat = u8::from(p >= 0.5);
        if yhat == y {
            correct += 1.0;
        }
        match (yhat, y) {
            (1, 1) => tp += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fn_ += 1.0,
            _ => {}
        }
    }
    let n = labels.len().max(1) as f64;
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    ModelQuality {
        accuracy: correct / n,
        f1,
        auc: auc(&probs, labels),
    }
}

/// Rank-based AUC; 0.5 when one class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && scores[order[e + 1]] == scores[order[k]] {
            e += 1;
        }
        let r = (k + e) as f64 / 2.0 + 1.0;
        rank_sum += order[k..=e].iter().filter(|&&i| labels[i] == 1).count() as f64 * r;
        k = e + 1;
    }
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return 0.5;
    }
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureDecl, FeatureKind};
    use crate::generators::Mode;
    use crate::models::Model;

    fn schema() -> Schema {
        Schema::new(
            vec![
                FeatureDecl {
                    name: "g".into(),
                    kind: FeatureKind::Integer,
                },
                FeatureDecl {
                    name: "x".into(),
                    kind: FeatureKind::Integer,
                },
            ],
            vec!["g".into()],
            "y",
        )
        .unwrap()
    }

    /// Predicts positive iff `x >= 1`.
    fn model() -> Model {
        Model::logistic_from_weights(vec![0.0, 10.0], -5.0)
    }

    #[test]
    fn idi_ratio_values() {
        let mut suite = TestSuite::empty(Mode::Base, 0);
        assert_eq!(idi_ratio(&suite), Err(MetricError::EmptySuite));
        suite.unique_samples = (0..10_000).map(|i| vec![i]).collect();
        suite.idi_samples = (0..3440).map(|i| vec![i]).collect();
        assert_eq!(idi_ratio(&suite).unwrap(), 0.344);
        suite.idi_samples.clear();
        assert_eq!(idi_ratio(&suite).unwrap(), 0.0);
        suite.idi_samples = suite.unique_samples.clone();
        assert_eq!(idi_ratio(&suite).unwrap(), 1.0);
    }

    #[test]
    fn spd_fixture() {
        // group 0: 3 of 4 positive; group 1: 1 of 4 positive
        let s: Vec<Vec<i64>> = vec![
            vec![0, 1],
            vec![0, 1],
            vec![0, 1],
            vec![0, 0],
            vec![1, 1],
            vec![1, 0],
            vec![1, 0],
            vec![1, 0],
        ];
        let rule = GroupRule::values("g", vec![0]);
        assert_eq!(spd(&s, &model(), &schema(), &rule).unwrap(), 0.5);
        let swapped = GroupRule::values("g", vec![1]);
        assert_eq!(spd(&s, &model(), &schema(), &swapped).unwrap(), 0.5);
        let constant = Model::logistic_from_weights(vec![0.0, 0.0], 1.0);
        assert_eq!(spd(&s, &constant, &schema(), &rule).unwrap(), 0.0);
        assert_eq!(
            spd(&s[..4], &model(), &schema(), &rule),
            Err(MetricError::MissingGroup("beta"))
        );
    }

    #[test]
    fn eod_fixture() {
        // among y = 1: group 0 has 4 of 5 predicted positive, group 1 has 3 of 5
        let mut s = Vec::new();
        let mut y = Vec::new();
        for (g, pos) in [(0, 4), (1, 3)] {
            for k in 0..5 {
                s.push(vec![g, i64::from(k < pos)]);
                y.push(1);
            }
            s.push(vec![g, 1]);
            y.push(0);
        }
        let rule = GroupRule::values("g", vec![0]);
        assert!((eod(&s, &y, &model(), &schema(), &rule).unwrap() - 0.2).abs() < 1e-12);
        let y0 = vec![0; s.len()];
        assert_eq!(
            eod(&s, &y0, &model(), &schema(), &rule),
            Err(MetricError::MissingGroup("alpha"))
        );
    }

    #[test]
    fn splits() {
        let s = vec![vec![30, 0], vec![17, 0], vec![60, 0], vec![61, 0]];
        let rule = GroupRule::range("g", 25, 60).unwrap();
        assert_eq!(group_split(&s, &schema(), &rule).unwrap(), (vec![0, 2], vec![1, 3]));
        assert_eq!(group_split(&[], &schema(), &rule).unwrap(), (vec![], vec![]));
        let bad = GroupRule::values("nope", vec![0]);
        assert!(matches!(
            group_split(&s, &schema(), &bad),
            Err(MetricError::UnknownFeature(_))
        ));
        assert!(GroupRule::range("g", 3, 1).is_err());
    }

    #[test]
    fn default_rule_uses_majority_for_many_values() {
        let rows = vec![vec![2, 0], vec![1, 0], vec![2, 1], vec![0, 1]];
        let d = Dataset::from_rows(schema(), rows, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(
            GroupRule::default_for(&d, "g").unwrap(),
            GroupRule::values("g", vec![2])
        );
        assert_eq!(
            GroupRule::default_for(&d, "x").unwrap(),
            GroupRule::values("x", vec![0])
        );
    }

    #[test]
    fn auc_brute_force() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.9];
        let labels = [0, 0, 1, 1, 1, 0];
        let mut wins = 0.0;
        let mut total = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if labels[i] == 1 && labels[j] == 0 {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        assert!((auc(&scores, &labels) - wins / total).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn spd_matches_counting(rows in proptest::collection::vec((0i64..3, 0i64..2), 2..40)) {
            let s: Vec<Vec<i64>> = rows.iter().map(|&(g, x)| vec![g, x]).collect();
            let rule = GroupRule::values("g", vec![0]);
            let flipped = GroupRule::values("g", vec![1, 2]);
            let (mut pa, mut na, mut pb, mut nb) = (0.0, 0.0, 0.0, 0.0);
            for &(g, x) in &rows {
                if g == 0 { na += 1.0; pa += x as f64 } else { nb += 1.0; pb += x as f64 }
            }
            let got = spd(&s, &model(), &schema(), &rule);
            if na == 0.0 || nb == 0.0 {
                proptest::prop_assert!(got.is_err());
            } else {
                let want = (pa / na - pb / nb).abs();
                let got = got.unwrap();
                proptest::prop_assert!((got - want).abs() < 1e-12);
                proptest::prop_assert!((0.0..=1.0).contains(&got));
                proptest::prop_assert_eq!(got, spd(&s, &model(), &schema(), &flipped).unwrap());
            }
        }
    }
}
