//! DirectLiNGAM causal ordering with the pairwise likelihood-ratio measure,
//! followed by least-squares coefficient fitting and magnitude pruning.
//!
//! The causal order is found by repeatedly picking the variable that looks
//! most exogenous against every remaining variable, then regressing it out of
//! the rest. Exogeneity between two standardised variables is scored with
//! the difference of approximate mutual information computed from a
//! maximum-entropy approximation of differential entropy.

#![allow(clippy::needless_range_loop)]

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::{CausalError, CausalGraph};
use crate::data::Dataset;

const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;
const VAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryOptions {
    /// Edges whose coefficient on standardised data is smaller in magnitude
    /// than this are dropped.
    pub edge_threshold: f64,
    /// Put the sensitive feature first in the causal order.
    pub sensitive_as_root: bool,
}

impl Default for DiscoveryOptions {
    fn default() -> Self {
        DiscoveryOptions {
            edge_threshold: 0.05,
            sensitive_as_root: true,
        }
    }
}

/// Minimum row count for discovery over `n_features` features.
pub fn required_rows(n_features: usize) -> usize {
    (10 * n_features).max(100)
}

/// Learns a causal graph over the dataset's features and its label. The
/// label is forced to be a sink; with `sensitive_as_root` the sensitive
/// feature starts the causal order.
pub fn discover_graph(data: &Dataset, sensitive: &str, options: &DiscoveryOptions) -> Result<CausalGraph, CausalError> {
    let s = data.schema().index_of(sensitive)?;
    let required = required_rows(data.n_features());
    if data.n_rows() < required {
        return Err(CausalError::InsufficientRows {
            rows: data.n_rows(),
            required,
        });
    }
    let mut names: Vec<String> = data.schema().feature_names().map(str::to_string).collect();
    names.push(data.schema().label.clone());
    let x = data.to_matrix(true);
    let root = options.sensitive_as_root.then_some(s);
    discover_matrix(&x, names, data.n_features(), root, options.edge_threshold)
}

/// Discovery on a real-valued matrix whose columns are `names`; column
/// `label` is forced to be a sink.
pub fn discover_matrix(
    x: &Array2<f64>,
    names: Vec<String>,
    label: usize,
    root: Option<usize>,
    edge_threshold: f64,
) -> Result<CausalGraph, CausalError> {
    let p = x.ncols();
    if names.len() != p {
        return Err(CausalError::Malformed(format!("{} names for {p} columns", names.len())));
    }
    if label >= p {
        return Err(CausalError::UnknownNode(format!("label index {label}")));
    }
    let order = causal_order(x, label, root, &names);
    let weights = fit_coefficients(x, &order, label, edge_threshold);
    CausalGraph::new(names, label, weights, edge_threshold)
}

fn variance(v: ArrayView1<f64>) -> f64 {
    v.var(0.0)
}

fn standardise(v: ArrayView1<f64>) -> Array1<f64> {
    let mean = v.mean().unwrap_or(0.0);
    let sd = variance(v).sqrt();
    if sd < VAR_EPS.sqrt() {
        Array1::zeros(v.len())
    } else {
        v.mapv(|a| (a - mean) / sd)
    }
}

/// `xi` with its least-squares projection on `xj` removed.
fn residual(xi: ArrayView1<f64>, xj: ArrayView1<f64>) -> Array1<f64> {
    let n = xi.len() as f64;
    let mi = xi.mean().unwrap_or(0.0);
    let mj = xj.mean().unwrap_or(0.0);
    let cov = xi.iter().zip(xj.iter()).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / n;
    let var = variance(xj);
    if var < VAR_EPS {
        return xi.to_owned();
    }
    let beta = cov / var;
    &xi - &(&xj * beta)
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Maximum-entropy approximation of differential entropy for a
/// unit-variance sample.
fn entropy(u: ArrayView1<f64>) -> f64 {
    let n = u.len() as f64;
    let (lc, ue) = u.iter().fold((0.0, 0.0), |(lc, ue), &v| {
        (lc + log_cosh(v), ue + v * (-v * v / 2.0).exp())
    });
    let (lc, ue) = (lc / n, ue / n);
    (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0 - K1 * (lc - GAMMA).powi(2) - K2 * ue.powi(2)
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let sd = variance(v.view()).sqrt();
    if sd < VAR_EPS.sqrt() {
        v
    } else {
        v / sd
    }
}

/// Difference of approximate mutual information between the two regression
/// directions. Positive values favour `i` upstream of `j`.
fn diff_mutual_info(xi: ArrayView1<f64>, xj: ArrayView1<f64>, hi: f64, hj: f64) -> f64 {
    let ri_j = unit(residual(xi, xj));
    let rj_i = unit(residual(xj, xi));
    (hj + entropy(ri_j.view())) - (hi + entropy(rj_i.view()))
}

fn causal_order(x: &Array2<f64>, label: usize, root: Option<usize>, names: &[String]) -> Vec<usize> {
    let p = x.ncols();
    let mut work = x.clone();
    let mut order = Vec::with_capacity(p);
    let mut remaining: Vec<usize> = Vec::new();
    for j in 0..p {
        if j == label {
            continue;
        }
        if variance(x.column(j)) < VAR_EPS {
            log::warn!("column {:?} has zero variance; it is left without edges", names[j]);
            order.push(j);
        } else {
            remaining.push(j);
        }
    }
    let take = |m: usize, order: &mut Vec<usize>, remaining: &mut Vec<usize>, work: &mut Array2<f64>| {
        order.push(m);
        remaining.retain(|&j| j != m);
        let xm = work.column(m).to_owned();
        for &j in remaining.iter() {
            let r = residual(work.column(j), xm.view());
            work.column_mut(j).assign(&r);
        }
    };
    if let Some(r) = root.filter(|r| remaining.contains(r)) {
        take(r, &mut order, &mut remaining, &mut work);
    }
    while !remaining.is_empty() {
        let m = if remaining.len() == 1 {
            remaining[0]
        } else {
            most_exogenous(&work, &remaining)
        };
        take(m, &mut order, &mut remaining, &mut work);
    }
    order.push(label);
    order
}

fn most_exogenous(work: &Array2<f64>, candidates: &[usize]) -> usize {
    let std_cols: Vec<Array1<f64>> = candidates.iter().map(|&j| standardise(work.column(j))).collect();
    let ent: Vec<f64> = std_cols.iter().map(|c| entropy(c.view())).collect();
    let k = candidates.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let diffs: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| diff_mutual_info(std_cols[a].view(), std_cols[b].view(), ent[a], ent[b]))
        .collect();
    let mut score = vec![0.0; k];
    for (&(a, b), &d) in pairs.iter().zip(&diffs) {
        // d(a, b) = -d(b, a)
        score[a] += d.min(0.0).powi(2);
        score[b] += (-d).min(0.0).powi(2);
    }
    let mut best = 0;
    for i in 1..k {
        if score[i] < score[best] {
            best = i;
        }
    }
    candidates[best]
}

/// Least squares with intercept of column `target` on `predictors`.
/// Returns the slope per predictor.
pub(crate) fn ols(x: &Array2<f64>, target: usize, predictors: &[usize]) -> Vec<f64> {
    let k = predictors.len();
    if k == 0 {
        return Vec::new();
    }
    let means: Vec<f64> = predictors.iter().map(|&j| x.column(j).mean().unwrap_or(0.0)).collect();
    let ty = x.column(target);
    let my = ty.mean().unwrap_or(0.0);
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for row in x.axis_iter(Axis(0)) {
        let yc = row[target] - my;
        for a in 0..k {
            let xa = row[predictors[a]] - means[a];
            rhs[a] += xa * yc;
            for b in a..k {
                gram[a][b] += xa * (row[predictors[b]] - means[b]);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }
    let trace: f64 = (0..k).map(|a| gram[a][a]).sum();
    let ridge = 1e-10 * trace.max(1.0) / k as f64;
    for (a, row) in gram.iter_mut().enumerate() {
        row[a] += ridge;
    }
    solve(gram, rhs)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = if a[r][r].abs() < 1e-300 {
            0.0
        } else {
            (b[r] - s) / a[r][r]
        };
    }
    x
}

fn fit_coefficients(x: &Array2<f64>, order: &[usize], label: usize, threshold: f64) -> Vec<Vec<f64>> {
    let p = x.ncols();
    let sd: Vec<f64> = (0..p).map(|j| variance(x.column(j)).sqrt()).collect();
    let mut weights = vec![vec![0.0; p]; p];
    for (pos, &target) in order.iter().enumerate() {
        if sd[target] < VAR_EPS.sqrt() {
            continue;
        }
        let mut preds: Vec<usize> = order[..pos]
            .iter()
            .copied()
            .filter(|&j| j != label && sd[j] >= VAR_EPS.sqrt())
            .collect();
        let mut coef = ols(x, target, &preds);
        let keep: Vec<usize> = preds
            .iter()
            .zip(&coef)
            .filter(|(&j, &b)| (b * sd[j] / sd[target]).abs() >= threshold)
            .map(|(&j, _)| j)
            .collect();
        if keep.len() != preds.len() {
            preds = keep;
            coef = ols(x, target, &preds);
        }
        for (&j, &b) in preds.iter().zip(&coef) {
            weights[target][j] = b;
        }
    }
    weights
}
