use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::generators::{Mode, PairLedger};
use crate::metrics::{FairnessReport, ModelQuality};
use crate::retrain::QualityDelta;
use crate::stats::ComparisonResult;

pub const REPORT_VERSION: u32 = 1;

/// Mean and sample standard deviation over the runs that produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    /// 0 for a single value.
    pub std: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: None,
                std: None,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary {
            mean: Some(mean),
            std: Some(std),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub report: FairnessReport,
    pub ledger: PairLedger,
    pub budget_unreachable: bool,
    pub fallback: bool,
    /// Feature fixed next to the sensitive one, causal mode only.
    pub fixed_feature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    /// `dataset/sensitive/model/generator/mode`.
    pub key: String,
    pub dataset: String,
    pub sensitive: String,
    pub model: String,
    pub generator: String,
    pub mode: Mode,
    pub idi_ratio: Summary,
    pub eod: Summary,
    pub spd: Summary,
    pub idis: Summary,
    pub samples: Summary,
    /// Counts summed over runs.
    pub ledger: PairLedger,
    pub fallback_runs: usize,
    pub unreachable_runs: usize,
    pub runs: Vec<RunRecord>,
}

/// Causal-mode values against base-mode values for one metric. `Better`
/// means the causal-mode values tend to be larger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    /// `dataset/sensitive/model/generator`.
    pub key: String,
    pub metric: String,
    pub result: Option<ComparisonResult>,
    /// Why `result` is missing.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub dataset: String,
    pub sensitive: String,
    pub run: usize,
    pub selector: String,
    pub edges: Option<usize>,
    /// Direct features with their median effect, or correlation scores.
    pub scores: Vec<(String, f64)>,
    pub selected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub dataset: String,
    pub model: String,
    pub run: usize,
    pub quality: ModelQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainRecord {
    /// `dataset/sensitive/model/generator/mode` of the suite that was
    /// corrected.
    pub key: String,
    pub run: usize,
    pub corrections: usize,
    pub before: FairnessReport,
    pub after: FairnessReport,
    pub quality_before: ModelQuality,
    pub quality_after: ModelQuality,
    pub quality_delta: QualityDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub context: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub dataset: String,
    pub selector: String,
    pub budget: usize,
    pub runs: usize,
    pub seed: u64,
    pub cases: Vec<CaseResult>,
    pub comparisons: Vec<MetricComparison>,
    pub analyses: Vec<AnalysisRecord>,
    pub quality: Vec<QualityRecord>,
    pub retrain: Vec<RetrainRecord>,
    pub failures: Vec<Failure>,
}

/// Wall-clock seconds per run, kept out of the report so reports stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub context: String,
    pub run: usize,
    pub analysis_secs: f64,
    pub generation_secs: f64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String, ExperimentError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let report: ExperimentReport = serde_json::from_str(text)?;
        if report.version != REPORT_VERSION {
            return Err(ExperimentError::Config(format!(
                "unsupported report version {}",
                report.version
            )));
        }
        Ok(report)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One row per case.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "dataset",
            "sensitive",
            "model",
            "generator",
            "mode",
            "runs",
            "idi_ratio_mean",
            "idi_ratio_std",
            "eod_mean",
            "eod_std",
            "spd_mean",
            "spd_std",
            "idis_mean",
            "samples_mean",
            "pairs_without_relaxation",
            "pairs_with_relaxation",
            "invalid_pairs",
            "repaired_pairs",
            "failed_samples",
            "fallback_runs",
            "unreachable_runs",
        ])?;
        for c in &self.cases {
            let l = &c.ledger;
            w.write_record([
                c.dataset.clone(),
                c.sensitive.clone(),
                c.model.clone(),
                c.generator.clone(),
                c.mode.name().to_string(),
                c.runs.len().to_string(),
                cell(c.idi_ratio.mean),
                cell(c.idi_ratio.std),
                cell(c.eod.mean),
                cell(c.eod.std),
                cell(c.spd.mean),
                cell(c.spd.std),
                cell(c.idis.mean),
                cell(c.samples.mean),
                l.pairs_without_relaxation.to_string(),
                l.pairs_with_relaxation.to_string(),
                l.invalid_pairs.to_string(),
                l.repaired_pairs.to_string(),
                l.failed_samples.to_string(),
                c.fallback_runs.to_string(),
                c.unreachable_runs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String, ExperimentError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ExperimentError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let json = dir.join("report.json");
        let csv = dir.join("report.csv");
        std::fs::write(&json, self.to_json()?)?;
        std::fs::write(&csv, self.csv_string()?)?;
        Ok(vec![json, csv])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_one_value_has_zero_spread() {
        let s = Summary::of(&[0.25]);
        assert_eq!((s.mean, s.std, s.n), (Some(0.25), Some(0.0), 1));
        assert_eq!(Summary::of(&[]).mean, None);
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, Some(2.5));
        assert!((s.std.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
