use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::generators::{GeneratorKind, GeneratorSpec};
use crate::metrics::GroupRule;
use crate::models::ModelConfig;

/// How the causal-mode runs pick the feature fixed next to the sensitive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// Largest bootstrapped causal effect among direct features.
    Causal,
    /// Largest absolute Pearson correlation.
    Correlation,
    /// Base-mode runs only.
    None,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Causal => "causal",
            Selector::Correlation => "correlation",
            Selector::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    #[serde(flatten)]
    pub config: ModelConfig,
}

fn default_models() -> Vec<NamedModel> {
    vec![NamedModel {
        name: "lr".into(),
        config: ModelConfig::logistic(),
    }]
}

fn default_generators() -> Vec<GeneratorSpec> {
    [GeneratorKind::Random, GeneratorKind::SgLite, GeneratorKind::AdfLite]
        .into_iter()
        .map(GeneratorSpec::new)
        .collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// One experiment, read from a TOML document. Relative paths are resolved
/// against the document's directory by [`ExperimentConfig::from_path`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset name used in case keys.
    pub dataset: String,
    pub data: PathBuf,
    pub schema: PathBuf,
    /// Sensitive features to iterate; empty means the schema's list.
    pub sensitive: Vec<String>,
    pub models: Vec<NamedModel>,
    pub generators: Vec<GeneratorSpec>,
    pub selector: Selector,
    pub budget: usize,
    pub runs: usize,
    /// Share of the training split given to causal analysis, in percent.
    pub k_percent: f64,
    /// Rows sampled per effect estimate.
    pub m: usize,
    pub bootstrap_repeats: usize,
    pub train_fraction: f64,
    pub edge_threshold: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Group splits for EOD and SPD; features without an entry use
    /// [`GroupRule::default_for`].
    pub groups: Vec<GroupRule>,
    pub retrain: bool,
    /// Write every generated suite under `suites/`.
    pub export_suites: bool,
    /// Write every trained model under `models/`.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "dataset".into(),
            data: PathBuf::new(),
            schema: PathBuf::new(),
            sensitive: Vec::new(),
            models: default_models(),
            generators: default_generators(),
            selector: Selector::Causal,
            budget: 10_000,
            runs: 10,
            k_percent: 100.0,
            m: 100,
            bootstrap_repeats: 20,
            train_fraction: 0.7,
            edge_threshold: 0.05,
            seed: 0,
            output_dir: default_output(),
            groups: Vec::new(),
            retrain: false,
            export_suites: false,
            save_models: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let mut config = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.data, &mut config.schema, &mut config.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return bad(format!("k_percent must lie in (0, 100], got {}", self.k_percent));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.m == 0 || self.bootstrap_repeats == 0 {
            return bad("m and bootstrap_repeats must be at least 1".into());
        }
        if self.models.is_empty() || self.generators.is_empty() {
            return bad("at least one model and one generator are required".into());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("model names must be unique".into());
        }
        let mut kinds: Vec<&str> = self.generators.iter().map(|g| g.kind.name()).collect();
        kinds.sort_unstable();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return bad("each generator kind may appear once".into());
        }
        for m in &self.models {
            m.config.validate()?;
        }
        for g in &self.groups {
            if let GroupRule::Range { lo, hi, .. } = g {
                if lo > hi {
                    return bad(format!("group range [{lo}, {hi}] is empty"));
                }
            }
        }
        Ok(())
    }

    pub fn group_rule(&self, feature: &str) -> Option<&GroupRule> {
        self.groups.iter().find(|g| g.feature() == feature)
    }
}
