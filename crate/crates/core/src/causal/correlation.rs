//! Correlation-ranking baseline: pick the non-sensitive feature whose values
//! track the sensitive feature most closely, ignoring causal direction.

use super::CausalError;
use crate::data::Dataset;

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}

/// `|r|` of every feature against `sensitive` (0 for the sensitive feature
/// itself and for constant columns).
pub fn correlation_ranking(data: &Dataset, sensitive: &str) -> Result<Vec<(String, f64)>, CausalError> {
    let s = data.schema().index_of(sensitive)?;
    let col = |j: usize| data.column(j).map(|v| v as f64).collect::<Vec<_>>();
    let sv = col(s);
    if pearson(&sv, &sv).is_none() {
        return Err(CausalError::DegenerateColumn(sensitive.to_string()));
    }
    Ok((0..data.n_features())
        .map(|j| {
            let r = if j == s {
                0.0
            } else {
                pearson(&sv, &col(j)).map_or(0.0, f64::abs)
            };
            (data.schema().name(j).to_string(), r)
        })
        .collect())
}

/// Non-sensitive feature with the largest `|r|`; values within 1e-12 of the
/// best count as ties and go to the lowest index.
pub fn select_correlation_feature(data: &Dataset, sensitive: &str) -> Result<String, CausalError> {
    if data.n_features() < 2 {
        return Err(CausalError::NoDirectFeature);
    }
    let s = data.schema().index_of(sensitive)?;
    let ranking = correlation_ranking(data, sensitive)?;
    let best = ranking
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != s)
        .map(|(_, (_, r))| *r)
        .fold(f64::NEG_INFINITY, f64::max);
    let (name, _) = ranking
        .into_iter()
        .enumerate()
        .find(|(j, (_, r))| *j != s && best - r <= 1e-12)
        .map(|(_, x)| x)
        .expect("at least one non-sensitive feature");
    Ok(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureDecl, FeatureKind, Schema};

    fn data(cols: Vec<Vec<i64>>) -> Dataset {
        let n = cols.len();
        let schema = Schema::new(
            (0..n)
                .map(|i| FeatureDecl {
                    name: format!("f{i}"),
                    kind: FeatureKind::Integer,
                })
                .collect(),
            vec!["f0".into()],
            "y",
        )
        .unwrap();
        let rows = (0..cols[0].len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        Dataset::from_rows(schema, rows, vec![0; cols[0].len()]).unwrap()
    }

    #[test]
    fn exact_copy_is_selected() {
        let s = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let d = data(vec![s.clone(), vec![3, 1, 4, 1, 5, 9, 2, 6], s]);
        assert_eq!(select_correlation_feature(&d, "f0").unwrap(), "f2");
        let r = correlation_ranking(&d, "f0").unwrap();
        assert!((r[2].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn magnitude_beats_sign() {
        // f1 is strongly negative, f2 weakly positive
        let s: Vec<i64> = (0..40).map(|i| i % 2).collect();
        let f1: Vec<i64> = (0..40).map(|i| if i % 10 == 0 { i % 2 } else { 1 - i % 2 }).collect();
        let f2: Vec<i64> = (0..40).map(|i| if i % 4 < 3 { i % 2 } else { 1 - i % 2 }).collect();
        let d = data(vec![s, f1, f2]);
        let r = correlation_ranking(&d, "f0").unwrap();
        assert!(r[1].1 > r[2].1);
        assert_eq!(select_correlation_feature(&d, "f0").unwrap(), "f1");
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = vec![0, 1, 0, 1];
        let d = data(vec![s, vec![5, 5, 5, 5], vec![2, 2, 2, 2]]);
        assert_eq!(select_correlation_feature(&d, "f0").unwrap(), "f1");
    }

    #[test]
    fn constant_sensitive_is_degenerate() {
        let d = data(vec![vec![1, 1, 1], vec![1, 2, 3]]);
        assert!(matches!(
            select_correlation_feature(&d, "f0"),
            Err(CausalError::DegenerateColumn(_))
        ));
    }
}
