//! Causality-guided fairness testing for tabular classifiers.
//!
//! A sensitive attribute rarely acts on a decision alone; it shifts other
//! features that the model also reads. fairprobe learns a causal graph from
//! the training data, picks the feature through which the sensitive
//! attribute acts most strongly on the label, and lets test generators vary
//! both together while searching for individual discrimination. Every pair
//! found that way is verified again under the plain definition.
//!
//! ```
//! use fairprobe::generators::{is_true_idi, Pair};
//! use fairprobe::models::Model;
//!
//! let model = Model::logistic_from_weights(vec![3.0, 1.0], -2.0);
//! let pair = Pair::new(vec![1, 0], vec![0, 0]);
//! assert!(is_true_idi(&pair, &model, 0).unwrap());
//! ```
//!
//! [`experiment::run_experiment`] runs the whole pipeline from a config
//! file; the `fairprobe` binary wraps it.

pub mod causal;
pub mod data;
pub mod experiment;
pub mod generators;
pub mod metrics;
pub mod models;
pub mod retrain;
pub mod seed;
pub mod stats;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/causal.md")]
    mod causal {}
    #[doc = include_str!("../../../book/src/generation.md")]
    mod generation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/retraining.md")]
    mod retraining {}
}
