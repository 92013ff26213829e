//! Causal analysis: graph discovery, direct-feature extraction, causal
//! effects and the selection of the feature to hold alongside the sensitive
//! one during perturbation.

mod correlation;
mod effect;
mod graph;
mod lingam;

use thiserror::Error;

pub use correlation::{correlation_ranking, pearson, select_correlation_feature};
pub use effect::{
    bootstrap_effect, causal_effect, direct_effects, effect_on_rows, lower_median, select_causal_feature, CausalEffect,
};
pub use graph::{direct_feature_indices, direct_features, graph_stability, topological_order, CausalGraph};
pub use lingam::{discover_graph, discover_matrix, required_rows, DiscoveryOptions};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("{rows} rows available, discovery needs at least {required}")]
    InsufficientRows { rows: usize, required: usize },
    #[error("column {0:?} has zero variance")]
    DegenerateColumn(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("{candidate:?} is not a direct causal feature of {sensitive:?}")]
    NotDirectlyRelevant { sensitive: String, candidate: String },
    #[error("feature {0:?} has an empty value domain")]
    EmptyDomain(String),
    #[error("no direct causal feature found")]
    NoDirectFeature,
    #[error("graphs are over different node sets")]
    NodeSetMismatch,
    #[error("stability needs at least two graphs, got {0}")]
    TooFewGraphs(usize),
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("label node has outgoing edges")]
    LabelNotSink,
    #[error("sample size {m} is invalid for {rows} rows")]
    InvalidSampleSize { m: usize, rows: usize },
    #[error("bootstrap repeats must be at least 1")]
    InvalidRepeats,
    #[error("malformed graph: {0}")]
    Malformed(String),
    #[error(transparent)]
    Data(#[from] DataError),
}
