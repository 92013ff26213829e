//! Interventional causal effect of a sensitive feature versus one of its
//! direct non-sensitive children, with bootstrap aggregation.
//!
//! For a set of sampled rows, each node's exogenous term is the residual of
//! its observed value against the fitted linear structural equations. An
//! intervention `do(f = v)` overwrites `f`, recomputes every descendant in
//! topological order from those residuals, and reads the label's structural
//! value thresholded at 0.5. The effect is
//!
//! ```text
//! |theta| / (|Va| * |Vb|) * sum_a sum_b | P(y=1 | do(s=a)) - P(y=1 | do(c=b)) |
//! ```
//!
//! where `theta` is the coefficient of `s -> c` and `Va`, `Vb` are the
//! frozen value domains of the two features.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{direct_feature_indices, CausalError, CausalGraph};
use crate::data::Dataset;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEffect {
    pub feature: String,
    /// Schema index of `feature`.
    pub index: usize,
    /// Median of `raw_repeats`.
    pub effect: f64,
    pub raw_repeats: Vec<f64>,
}

/// Node values (features then label) for one data row.
fn node_values(data: &Dataset, row: usize) -> Vec<f64> {
    let mut v: Vec<f64> = data.row(row).iter().map(|&c| c as f64).collect();
    v.push(f64::from(data.label(row)));
    v
}

fn check_alignment(graph: &CausalGraph, data: &Dataset) -> Result<(), CausalError> {
    let names = data.schema().feature_names();
    let expected = data.n_features() + 1;
    if graph.n_nodes() != expected
        || graph.label() != data.n_features()
        || !names.zip(graph.nodes()).all(|(a, b)| a == b)
    {
        return Err(CausalError::Malformed(
            "graph nodes do not match the dataset schema".into(),
        ));
    }
    Ok(())
}

/// Estimates `P(y = 1 | do(node = value))` for every value, over `rows`.
struct Intervention<'g> {
    graph: &'g CausalGraph,
    /// Per row: observed node values and exogenous residuals.
    base: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'g> Intervention<'g> {
    fn new(graph: &'g CausalGraph, data: &Dataset, rows: &[usize]) -> Self {
        let w = graph.weights();
        let base = rows
            .iter()
            .map(|&r| {
                let x = node_values(data, r);
                let e = (0..x.len())
                    .map(|j| x[j] - w[j].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>())
                    .collect();
                (x, e)
            })
            .collect();
        Intervention { graph, base }
    }

    fn positive_rate(&self, node: usize, value: f64) -> f64 {
        let w = self.graph.weights();
        let label = self.graph.label();
        let downstream = self.graph.descendants(node);
        let order: Vec<usize> = self
            .graph
            .topo_order()
            .iter()
            .copied()
            .filter(|j| downstream.contains(j))
            .collect();
        let mut positives = 0usize;
        let mut x = Vec::new();
        for (obs, e) in &self.base {
            x.clone_from(obs);
            x[node] = value;
            for &j in &order {
                x[j] = w[j].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>() + e[j];
            }
            let y = if downstream.contains(&label) {
                x[label]
            } else {
                obs[label]
            };
            if y >= 0.5 {
                positives += 1;
            }
        }
        positives as f64 / self.base.len().max(1) as f64
    }
}

fn resolve(
    graph: &CausalGraph,
    data: &Dataset,
    sensitive: &str,
    candidate: &str,
) -> Result<(usize, usize), CausalError> {
    check_alignment(graph, data)?;
    let s = graph.index_of(sensitive)?;
    let c = graph.index_of(candidate)?;
    if !direct_feature_indices(graph, s).contains(&c) {
        return Err(CausalError::NotDirectlyRelevant {
            sensitive: sensitive.to_string(),
            candidate: candidate.to_string(),
        });
    }
    Ok((s, c))
}

/// Effect computed over the given data rows (duplicates allowed).
pub fn effect_on_rows(
    graph: &CausalGraph,
    data: &Dataset,
    s: usize,
    c: usize,
    rows: &[usize],
) -> Result<f64, CausalError> {
    let va = data.domain(s).values();
    let vb = data.domain(c).values();
    if va.is_empty() {
        return Err(CausalError::EmptyDomain(graph.nodes()[s].clone()));
    }
    if vb.is_empty() {
        return Err(CausalError::EmptyDomain(graph.nodes()[c].clone()));
    }
    let theta = graph.coefficient(s, c).abs();
    let iv = Intervention::new(graph, data, rows);
    let pa: Vec<f64> = va.iter().map(|&a| iv.positive_rate(s, a as f64)).collect();
    let pb: Vec<f64> = vb.iter().map(|&b| iv.positive_rate(c, b as f64)).collect();
    let total: f64 = pa.iter().map(|a| pb.iter().map(|b| (a - b).abs()).sum::<f64>()).sum();
    Ok(theta * total / (va.len() * vb.len()) as f64)
}

/// Effect over `m` rows drawn without replacement. With `m` equal to the
/// row count every row is used once.
pub fn causal_effect(
    graph: &CausalGraph,
    data: &Dataset,
    sensitive: &str,
    candidate: &str,
    m: usize,
    seed: u64,
) -> Result<f64, CausalError> {
    let (s, c) = resolve(graph, data, sensitive, candidate)?;
    if m == 0 || m > data.n_rows() {
        return Err(CausalError::InvalidSampleSize { m, rows: data.n_rows() });
    }
    let rows = index::sample(&mut seed::rng(seed), data.n_rows(), m).into_vec();
    effect_on_rows(graph, data, s, c, &rows)
}

/// Lower median.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// `repeats` bootstrap draws of `m` rows with replacement, one effect each;
/// the result is their lower median.
pub fn bootstrap_effect(
    graph: &CausalGraph,
    data: &Dataset,
    sensitive: &str,
    candidate: &str,
    m: usize,
    repeats: usize,
    seed: u64,
) -> Result<CausalEffect, CausalError> {
    let (s, c) = resolve(graph, data, sensitive, candidate)?;
    if m == 0 || data.is_empty() {
        return Err(CausalError::InvalidSampleSize { m, rows: data.n_rows() });
    }
    if repeats == 0 {
        return Err(CausalError::InvalidRepeats);
    }
    let raw_repeats = (0..repeats)
        .map(|r| {
            let mut rng = seed::rng(seed::derive(seed, "bootstrap", r as u64));
            let rows: Vec<usize> = (0..m).map(|_| rng.gen_range(0..data.n_rows())).collect();
            effect_on_rows(graph, data, s, c, &rows)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(CausalEffect {
        feature: candidate.to_string(),
        index: c,
        effect: lower_median(&raw_repeats),
        raw_repeats,
    })
}

/// Bootstrapped effect for every direct feature of `sensitive`.
pub fn direct_effects(
    graph: &CausalGraph,
    data: &Dataset,
    sensitive: &str,
    m: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<CausalEffect>, CausalError> {
    let s = graph.index_of(sensitive)?;
    direct_feature_indices(graph, s)
        .into_iter()
        .map(|c| {
            let name = graph.nodes()[c].clone();
            bootstrap_effect(graph, data, sensitive, &name, m, repeats, seed::derive(seed, &name, 0))
        })
        .collect()
}

/// Feature with the largest effect; ties go to the lowest schema index.
pub fn select_causal_feature(effects: &[CausalEffect]) -> Result<&CausalEffect, CausalError> {
    effects
        .iter()
        .max_by(|a, b| a.effect.total_cmp(&b.effect).then(b.index.cmp(&a.index)))
        .ok_or(CausalError::NoDirectFeature)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eff(name: &str, index: usize, effect: f64) -> CausalEffect {
        CausalEffect {
            feature: name.into(),
            index,
            effect,
            raw_repeats: vec![effect],
        }
    }

    #[test]
    fn selects_largest_effect() {
        let effects = vec![eff("Decile1b", 3, 2.11), eff("Lsat", 5, 4.75), eff("Decile3", 4, 2.29)];
        assert_eq!(select_causal_feature(&effects).unwrap().feature, "Lsat");
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let effects = vec![eff("b", 2, 1.0), eff("a", 1, 1.0)];
        assert_eq!(select_causal_feature(&effects).unwrap().feature, "a");
    }

    #[test]
    fn empty_has_no_direct_feature() {
        assert!(matches!(select_causal_feature(&[]), Err(CausalError::NoDirectFeature)));
    }

    #[test]
    fn lower_median_even_and_odd() {
        assert_eq!(lower_median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[7.0]), 7.0);
    }
}
