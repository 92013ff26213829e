mod common;

use fairprobe::data::{Dataset, FeatureDecl, FeatureKind, Schema};
use fairprobe::metrics::model_quality;
use fairprobe::models::{predict, train, Classifier, Model, ModelConfig, ModelKind};
use fairprobe::seed;
use proptest::prelude::*;
use rand::Rng;

use common::gradient_error;

fn schema(width: usize) -> Schema {
    let features = (0..width)
        .map(|j| FeatureDecl {
            name: format!("x{j}"),
            kind: FeatureKind::Integer,
        })
        .collect();
    Schema::new(features, vec!["x0".into()], "y").unwrap()
}

fn dataset(rows: Vec<Vec<i64>>, labels: Vec<u8>) -> Dataset {
    let width = rows[0].len();
    Dataset::from_rows(schema(width), rows, labels).unwrap()
}

fn accuracy(model: &Model, data: &Dataset) -> f64 {
    model_quality(model, data).accuracy
}

#[test]
fn mlp_learns_xor() {
    let rows: Vec<Vec<i64>> = (0..40).map(|i| vec![(i % 4) / 2, i % 2]).collect();
    let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] != r[1])).collect();
    let data = dataset(rows, labels);
    let config = ModelConfig {
        kind: ModelKind::Mlp,
        hidden_sizes: vec![8],
        dropout: Vec::new(),
        learning_rate: 0.01,
        batch_size: 4,
        epochs: 2000,
        l2: 0.0,
        seed: 3,
        early_stop_patience: None,
    };
    let model = train(&data, &config).unwrap();
    assert_eq!(accuracy(&model, &data), 1.0);
    // a linear model cannot separate XOR
    let lr = train(&data, &ModelConfig::logistic()).unwrap();
    assert!(accuracy(&lr, &data) <= 0.75);
}

#[test]
fn logistic_reaches_the_best_linear_separator() {
    let mut rng = seed::rng(11);
    let rows: Vec<Vec<i64>> = (0..300)
        .map(|_| vec![rng.gen_range(0..10), rng.gen_range(0..10)])
        .collect();
    let labels: Vec<u8> = rows.iter().map(|r| u8::from(2 * r[0] - r[1] > 4)).collect();
    let data = dataset(rows.clone(), labels.clone());

    // exhaustive search over small integer separators
    let mut best = 0.0f64;
    for a in -3..=3 {
        for b in -3..=3 {
            for c in -10..=10 {
                let hits = rows
                    .iter()
                    .zip(&labels)
                    .filter(|(r, &y)| u8::from(a * r[0] + b * r[1] + c > 0) == y)
                    .count();
                best = best.max(hits as f64 / rows.len() as f64);
            }
        }
    }
    assert_eq!(best, 1.0);

    let mut config = ModelConfig::logistic();
    config.epochs = 400;
    config.l2 = 0.0;
    config.learning_rate = 0.05;
    let model = train(&data, &config).unwrap();
    assert!(accuracy(&model, &data) >= best - 0.02, "{}", accuracy(&model, &data));
}

#[test]
fn dnn_shapes_train() {
    let mut rng = seed::rng(5);
    let rows: Vec<Vec<i64>> = (0..400)
        .map(|_| (0..4).map(|_| rng.gen_range(0..5)).collect())
        .collect();
    let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + r[1] > r[2] + 2)).collect();
    let data = dataset(rows, labels);
    let majority = {
        let pos = data.labels().iter().filter(|&&y| y == 1).count() as f64 / data.n_rows() as f64;
        pos.max(1.0 - pos)
    };
    for mut config in [ModelConfig::dnn5(), ModelConfig::dnn6(16)] {
        config.epochs = 30;
        config.learning_rate = 0.005;
        let model = train(&data, &config).unwrap();
        let acc = accuracy(&model, &data);
        assert!(acc > majority + 0.05, "{config:?}: {acc} vs {majority}");
    }
}

#[test]
fn gradients_match_central_differences() {
    let width = 6;
    let mut rng = seed::rng(21);
    let weights: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lr = Model::logistic_from_weights(weights, 0.3);
    assert!(gradient_error(&lr, 100, 1e-4, 1).0 < 1e-4);

    let mut mlp = ModelConfig::dnn5();
    mlp.hidden_sizes = vec![16, 16, 8, 8, 4];
    mlp.seed = 2;
    let net = Model::initialise(&mlp, width).unwrap();
    assert!(gradient_error(&net, 100, 1e-4, 2).0 < 1e-4);

    // trained models carry a standardisation in front of the first layer
    let rows: Vec<Vec<i64>> = (0..200)
        .map(|_| (0..width).map(|_| rng.gen_range(0..20)).collect())
        .collect();
    let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > r[1])).collect();
    let data = dataset(rows, labels);
    let mut cfg = ModelConfig::dnn6(8);
    cfg.epochs = 5;
    let trained = train(&data, &cfg).unwrap();
    assert!(gradient_error(&trained, 100, 1e-4, 3).0 < 1e-4);
}

#[test]
fn saved_models_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ModelConfig::dnn6(4);
    cfg.seed = 9;
    let model = Model::initialise(&cfg, 3).unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.probability(&[1.0, 2.0, 3.0]), model.probability(&[1.0, 2.0, 3.0]));
}

proptest! {
    #[test]
    fn predictions_are_probabilities(x in proptest::collection::vec(-1e3f64..1e3, 4), seed in 0u64..50) {
        let mut cfg = ModelConfig::dnn6(8);
        cfg.seed = seed;
        let model = Model::initialise(&cfg, 4).unwrap();
        let (label, p) = predict(&model, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(label, u8::from(p >= 0.5));
    }
}
