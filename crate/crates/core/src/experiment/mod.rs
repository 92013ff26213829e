//! The seeded experiment harness: split, train, analyse, generate in both
//! modes, measure, compare and report.

mod config;
mod report;
mod runner;

use thiserror::Error;

pub use config::{ExperimentConfig, NamedModel, Selector};
pub use report::{
    AnalysisRecord, CaseResult, ExperimentReport, Failure, MetricComparison, QualityRecord, RetrainRecord, RunRecord,
    Summary, TimingRecord, REPORT_VERSION,
};
pub use runner::{analyze, compare_reports, run_experiment, run_on, Analysis, ExperimentOutput};

use crate::causal::CausalError;
use crate::data::DataError;
use crate::generators::GenError;
use crate::metrics::MetricError;
use crate::models::ModelError;
use crate::retrain::RetrainError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Stage {
        context: String,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Retrain(#[from] RetrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    pub(crate) fn within(self, context: impl Into<String>) -> Self {
        ExperimentError::Stage {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
