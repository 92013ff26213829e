mod common;

use std::collections::BTreeSet;

use fairprobe::causal::{
    bootstrap_effect, causal_effect, discover_graph, discover_matrix, graph_stability, CausalGraph, DiscoveryOptions,
};
use fairprobe::data::Dataset;
use fairprobe::seed;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

use common::{discrete_fixture, edge_set, enumeration_oracle, int_schema, names, simulate_sem, SEM};

#[test]
fn five_variable_sem_is_recovered() {
    let truth: BTreeSet<(usize, usize)> = SEM.iter().map(|&(s, d, _)| (s, d)).collect();
    for s in 0..10 {
        let x = simulate_sem(5000, 100 + s);
        let g = discover_matrix(&x, names(5), 4, None, 0.05).unwrap();
        let found = edge_set(&g);
        let tp = found.intersection(&truth).count() as f64;
        let precision = tp / found.len().max(1) as f64;
        let recall = tp / truth.len() as f64;
        let f1 = 2.0 * precision * recall / (precision + recall).max(1e-12);
        assert!(f1 >= 0.9, "seed {s}: f1 {f1}, edges {found:?}");
        for &(src, dst, w) in &SEM {
            if g.has_edge(src, dst) {
                let err = (g.coefficient(src, dst) - w).abs();
                assert!(err <= 0.2, "seed {s}: {src}->{dst} off by {err}");
            }
        }
    }
}

#[test]
fn two_edge_chain_coefficients() {
    let mut rng = seed::rng(3);
    let mut x = Array2::zeros((5000, 3));
    for r in 0..5000 {
        let x1: f64 = rng.gen_range(-1.0..1.0);
        let x2 = 2.0 * x1 + rng.gen_range(-1.0..1.0);
        let y = -1.5 * x2 + rng.gen_range(-1.0..1.0);
        x[[r, 0]] = x1;
        x[[r, 1]] = x2;
        x[[r, 2]] = y;
    }
    let g = discover_matrix(&x, names(3), 2, None, 0.05).unwrap();
    assert!((g.coefficient(0, 1) - 2.0).abs() <= 0.2);
    assert!((g.coefficient(1, 2) + 1.5).abs() <= 0.2);
    assert!(!g.has_edge(0, 2));
}

#[test]
fn independent_columns_have_no_edges() {
    let mut rng = seed::rng(11);
    let x = Array2::from_shape_fn((5000, 5), |_| rng.gen_range(-1.0..1.0));
    let g = discover_matrix(&x, names(5), 4, None, 0.05).unwrap();
    assert_eq!(g.n_edges(), 0, "{:?}", g.edges());
}

#[test]
fn bootstrap_graphs_are_stable() {
    let x = simulate_sem(5000, 7);
    let mut rng = seed::rng(8);
    let graphs: Vec<CausalGraph> = (0..20)
        .map(|_| {
            let idx: Vec<usize> = (0..x.nrows()).map(|_| rng.gen_range(0..x.nrows())).collect();
            let sample = x.select(ndarray::Axis(0), &idx);
            discover_matrix(&sample, names(5), 4, None, 0.05).unwrap()
        })
        .collect();
    let h = graph_stability(&graphs).unwrap();
    assert!(h <= 3.0, "mean hamming {h}");
}

#[test]
fn effect_matches_enumeration_oracle() {
    let (graph, data) = discrete_fixture();
    let expected = enumeration_oracle(&data);
    let got = causal_effect(&graph, &data, "x0", "x1", data.n_rows(), 5).unwrap();
    assert!(expected > 0.0);
    assert!((got - expected).abs() <= 0.02 * expected, "{got} vs {expected}");
}

#[test]
fn constant_label_path_gives_zero_effect() {
    let (_, data) = discrete_fixture();
    let graph = CausalGraph::from_edges(
        vec!["x0".into(), "x1".into(), "y".into()],
        2,
        &[(0, 1, 1.0), (1, 2, 0.0)],
        0.05,
    );
    // a zero coefficient is no edge, so x1 is not on a path to the label
    let graph = graph.unwrap();
    assert!(causal_effect(&graph, &data, "x0", "x1", 100, 1).is_err());
    let graph = CausalGraph::from_edges(
        vec!["x0".into(), "x1".into(), "y".into()],
        2,
        &[(0, 1, 1.0), (1, 2, 1e-9)],
        0.05,
    )
    .unwrap();
    let e = causal_effect(&graph, &data, "x0", "x1", data.n_rows(), 1).unwrap();
    assert_eq!(e, 0.0);
}

#[test]
fn bootstrap_single_repeat_and_determinism() {
    let (graph, data) = discrete_fixture();
    let one = bootstrap_effect(&graph, &data, "x0", "x1", 100, 1, 9).unwrap();
    assert_eq!(one.effect, one.raw_repeats[0]);
    let a = bootstrap_effect(&graph, &data, "x0", "x1", 100, 20, 9).unwrap();
    let b = bootstrap_effect(&graph, &data, "x0", "x1", 100, 20, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.raw_repeats.len(), 20);
    let lo = a.raw_repeats.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.raw_repeats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= a.effect && a.effect <= hi);
}

#[test]
fn dataset_discovery_keeps_label_sink_and_sensitive_root() {
    let mut rng = seed::rng(4);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..2000 {
        let s = rng.gen_range(0..2i64);
        let c = 2 * s + rng.gen_range(0..3i64);
        let d = rng.gen_range(0..4i64);
        labels.push(u8::from(c + d + rng.gen_range(0..3i64) >= 5));
        rows.push(vec![s, c, d]);
    }
    let data = Dataset::from_rows(int_schema(3, "x0"), rows, labels).unwrap();
    let g = discover_graph(&data, "x0", &DiscoveryOptions::default()).unwrap();
    assert_eq!(g.topo_order()[0], 0);
    assert_eq!(g.children(3).count(), 0);
    assert!(g.has_edge(0, 1));
    assert_eq!(
        fairprobe::causal::direct_features(&g, "x0").unwrap(),
        vec!["x1".to_string()]
    );
}

#[test]
fn too_few_rows_rejected() {
    let rows = vec![vec![0, 1]; 50];
    let data = Dataset::from_rows(int_schema(2, "x0"), rows, vec![0; 50]).unwrap();
    assert!(matches!(
        discover_graph(&data, "x0", &DiscoveryOptions::default()),
        Err(fairprobe::causal::CausalError::InsufficientRows {
            rows: 50,
            required: 100
        })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn discovered_graphs_are_dags_with_sink_label(seed_v in any::<u64>(), p in 2usize..6, mix in 0.0f64..2.0) {
        let mut rng = seed::rng(seed_v);
        let mut x = Array2::zeros((300, p));
        for r in 0..300 {
            for j in 0..p {
                let mut v: f64 = rng.gen_range(-1.0..1.0);
                if j > 0 {
                    v += mix * x[[r, j - 1]];
                }
                x[[r, j]] = v;
            }
        }
        let label = (seed_v as usize) % p;
        let g = discover_matrix(&x, names(p), label, None, 0.05).unwrap();
        prop_assert_eq!(g.children(label).count(), 0);
        let pos: Vec<usize> = {
            let mut pos = vec![0; p];
            for (k, &v) in g.topo_order().iter().enumerate() { pos[v] = k; }
            pos
        };
        for (s, d, _) in g.edges() {
            prop_assert!(pos[s] < pos[d]);
        }
    }
}
