//! Fixtures and hand-computed oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use fairprobe::causal::CausalGraph;
use fairprobe::data::{Dataset, FeatureDecl, FeatureKind, Schema};
use fairprobe::generators::Pair;
use fairprobe::models::{input_gradient, Classifier};
use fairprobe::seed;
use ndarray::Array2;
use rand::Rng;

/// Ground-truth edges of the five-variable fixture: (src, dst, coefficient).
pub const SEM: [(usize, usize, f64); 5] = [(0, 1, 0.8), (0, 2, -0.6), (1, 3, 0.7), (2, 3, 0.5), (3, 4, -0.9)];

pub fn simulate_sem(rows: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    let mut x = Array2::zeros((rows, 5));
    for r in 0..rows {
        for j in 0..5 {
            let mut v: f64 = rng.gen_range(-1.0..1.0);
            for &(src, dst, w) in &SEM {
                if dst == j {
                    v += w * x[[r, src]];
                }
            }
            x[[r, j]] = v;
        }
    }
    x
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

pub fn edge_set(g: &CausalGraph) -> BTreeSet<(usize, usize)> {
    g.edges().into_iter().map(|(s, d, _)| (s, d)).collect()
}

pub fn int_schema(n: usize, sensitive: &str) -> Schema {
    let features = (0..n)
        .map(|i| FeatureDecl {
            name: format!("x{i}"),
            kind: FeatureKind::Integer,
        })
        .collect();
    Schema::new(features, vec![sensitive.into()], "y").unwrap()
}

/// Three-node discrete fixture: s -> c (1.0), c -> y (0.6), s -> y (0.3).
pub fn discrete_fixture() -> (CausalGraph, Dataset) {
    let mut rng = seed::rng(21);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..400 {
        let s = rng.gen_range(0..2i64);
        let c = if rng.gen_bool(0.8) { s } else { 1 - s };
        let p = 0.2 + 0.5 * c as f64 + 0.2 * s as f64;
        labels.push(u8::from(rng.gen_bool(p)));
        rows.push(vec![s, c]);
    }
    let data = Dataset::from_rows(int_schema(2, "x0"), rows, labels).unwrap();
    let graph = CausalGraph::from_edges(
        vec!["x0".into(), "x1".into(), "y".into()],
        2,
        &[(0, 1, 1.0), (1, 2, 0.6), (0, 2, 0.3)],
        0.05,
    )
    .unwrap();
    (graph, data)
}

/// Exhaustive enumeration of every row under every intervention value,
/// propagating the three structural equations by hand.
pub fn enumeration_oracle(data: &Dataset) -> f64 {
    let rows: Vec<(f64, f64, f64)> = (0..data.n_rows())
        .map(|i| (data.row(i)[0] as f64, data.row(i)[1] as f64, f64::from(data.label(i))))
        .collect();
    let n = rows.len() as f64;
    let p_do_s = |a: f64| {
        rows.iter()
            .filter(|&&(s, c, y)| {
                let (ec, ey) = (c - s, y - 0.6 * c - 0.3 * s);
                let c2 = a + ec;
                0.6 * c2 + 0.3 * a + ey >= 0.5
            })
            .count() as f64
            / n
    };
    let p_do_c = |b: f64| {
        rows.iter()
            .filter(|&&(s, c, y)| {
                let ey = y - 0.6 * c - 0.3 * s;
                0.6 * b + 0.3 * s + ey >= 0.5
            })
            .count() as f64
            / n
    };
    let mut total = 0.0;
    for a in [0.0, 1.0] {
        for b in [0.0, 1.0] {
            total += (p_do_s(a) - p_do_c(b)).abs();
        }
    }
    1.0 * total / 4.0
}

/// Directed-edge F1 of `found` against `truth`.
pub fn edge_f1(found: &BTreeSet<(usize, usize)>, truth: &BTreeSet<(usize, usize)>) -> f64 {
    let tp = found.intersection(truth).count() as f64;
    let precision = tp / found.len().max(1) as f64;
    let recall = tp / truth.len() as f64;
    2.0 * precision * recall / (precision + recall).max(1e-12)
}

/// Unlabelled integer dataset whose first feature is sensitive.
pub fn dataset(rows: Vec<Vec<i64>>) -> Dataset {
    let n = rows[0].len();
    let labels = vec![0; rows.len()];
    Dataset::from_rows(int_schema(n, "x0"), rows, labels).unwrap()
}

pub const W: [f64; 4] = [2.0, 1.0, -1.5, 0.5];
pub const B: f64 = -1.0;

pub fn cube() -> Dataset {
    dataset((0..16).map(|m| (0..4).map(|i| (m >> i) & 1).collect()).collect())
}

/// Label of the fixed linear model, evaluated by hand.
pub fn oracle_label(x: &[i64]) -> bool {
    W.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>() + B >= 0.0
}

pub fn oracle_idis() -> BTreeSet<Vec<i64>> {
    (0..16)
        .map(|m| (0..4).map(|i| (m >> i) & 1).collect::<Vec<i64>>())
        .filter(|x| {
            let mut y = x.clone();
            y[0] = 1 - y[0];
            oracle_label(x) != oracle_label(&y)
        })
        .collect()
}

/// A pair over `0..4` codes that may or may not differ only on `s` and `c`.
pub fn random_pair(rng: &mut impl Rng, width: usize, s: usize, c: usize) -> Pair {
    let a: Vec<i64> = (0..width).map(|_| rng.gen_range(0..4)).collect();
    let mut b = a.clone();
    match rng.gen_range(0..4) {
        0 => b[s] = (a[s] + rng.gen_range(1..4)) % 4,
        1 => {
            b[s] = (a[s] + rng.gen_range(1..4)) % 4;
            b[c] = rng.gen_range(0..4);
        }
        2 => {
            let j = rng.gen_range(0..width);
            b[j] = rng.gen_range(0..4);
        }
        _ => b = (0..width).map(|_| rng.gen_range(0..4)).collect(),
    }
    Pair::new(a, b)
}

fn central_difference(model: &dyn Classifier, x: &[f64], j: usize, h: f64) -> f64 {
    let (mut up, mut down) = (x.to_vec(), x.to_vec());
    up[j] += h;
    down[j] -= h;
    (model.probability(&up) - model.probability(&down)) / (2.0 * h)
}

/// Largest relative gap between the analytic input gradient and a central
/// difference with step `h`, over `n` random inputs in `[-3, 3)`, plus the
/// number of inputs skipped because a ReLU kink lies within `h` of them
/// (differences at `h` and `h / 2` disagree there).
pub fn gradient_error(model: &dyn Classifier, n: usize, h: f64, seed_v: u64) -> (f64, usize) {
    let width = model.input_width();
    let mut rng = seed::rng(seed_v);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    while checked < n {
        let x: Vec<f64> = (0..width).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fd: Vec<f64> = (0..width).map(|j| central_difference(model, &x, j, h)).collect();
        let kink = (0..width).any(|j| {
            let half = central_difference(model, &x, j, h / 2.0);
            (fd[j] - half).abs() > 1e-6 * fd[j].abs().max(1e-3)
        });
        if kink {
            skipped += 1;
            continue;
        }
        checked += 1;
        let g = input_gradient(model, &x).unwrap();
        for j in 0..width {
            worst = worst.max((g[j] - fd[j]).abs() / g[j].abs().max(fd[j].abs()).max(1e-6));
        }
    }
    (worst, skipped)
}
