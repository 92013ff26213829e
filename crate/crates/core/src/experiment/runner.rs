use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::report::{
    AnalysisRecord, CaseResult, ExperimentReport, Failure, MetricComparison, QualityRecord, RetrainRecord, RunRecord,
    Summary, TimingRecord, REPORT_VERSION,
};
use super::{ExperimentConfig, ExperimentError, Selector};
use crate::causal::{
    correlation_ranking, direct_effects, discover_graph, select_causal_feature, select_correlation_feature,
    CausalError, CausalGraph, DiscoveryOptions,
};
use crate::data::{load_csv, split_train_test, subsample_indices, Dataset, Schema};
use crate::generators::{run_generator, GeneratorSpec, Mode, PairLedger, TestSuite};
use crate::metrics::{fairness_report, model_quality, GroupRule};
use crate::models::{train, Model};
use crate::retrain::{correct_pairs, retrain_and_retest, RetestPlan};
use crate::seed;
use crate::stats::{compare, StatsError};

/// Outcome of the pre-testing analysis for one sensitive feature.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub graph: Option<CausalGraph>,
    pub scores: Vec<(String, f64)>,
    /// Schema index of the selected feature; `None` when nothing qualifies.
    pub selected: Option<usize>,
}

/// Selects the feature to fix next to `sensitive`, using a seeded
/// `k_percent` share of `train_data`.
pub fn analyze(
    config: &ExperimentConfig,
    train_data: &Dataset,
    sensitive: &str,
    run: usize,
) -> Result<Analysis, ExperimentError> {
    let schema = train_data.schema();
    schema.index_of(sensitive)?;
    let subset_seed = seed::derive(config.seed, &format!("subsample/{}", config.dataset), run as u64);
    let rows = subsample_indices(train_data.n_rows(), config.k_percent / 100.0, subset_seed);
    let part = train_data.subset(&rows);
    match config.selector {
        Selector::None => Ok(Analysis {
            graph: None,
            scores: Vec::new(),
            selected: None,
        }),
        Selector::Correlation => {
            let scores = correlation_ranking(&part, sensitive)?;
            let selected = match select_correlation_feature(&part, sensitive) {
                Ok(name) => Some(schema.index_of(&name)?),
                Err(CausalError::NoDirectFeature) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(Analysis {
                graph: None,
                scores,
                selected,
            })
        }
        Selector::Causal => {
            let options = DiscoveryOptions {
                edge_threshold: config.edge_threshold,
                ..DiscoveryOptions::default()
            };
            let graph = discover_graph(&part, sensitive, &options)?;
            let effect_seed = seed::derive(
                config.seed,
                &format!("effects/{}/{sensitive}", config.dataset),
                run as u64,
            );
            let m = config.m.min(part.n_rows());
            let effects = direct_effects(&graph, &part, sensitive, m, config.bootstrap_repeats, effect_seed)?;
            let selected = match select_causal_feature(&effects) {
                Ok(e) => Some(e.index),
                Err(CausalError::NoDirectFeature) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(Analysis {
                graph: Some(graph),
                scores: effects.iter().map(|e| (e.feature.clone(), e.effect)).collect(),
                selected,
            })
        }
    }
}

/// Report plus the timings kept beside it.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub timings: Vec<TimingRecord>,
}

impl ExperimentOutput {
    /// Writes `report.json`, `report.csv` and `timings.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut paths = self.report.write_to(&dir)?;
        let timings = dir.as_ref().join("timings.json");
        std::fs::write(&timings, serde_json::to_string_pretty(&self.timings)?)?;
        paths.push(timings);
        Ok(paths)
    }
}

/// Case coordinates: sensitive, model and generator positions plus mode.
type CaseIndex = (usize, usize, usize, Mode);

#[derive(Default)]
struct RunOutput {
    records: Vec<(CaseIndex, RunRecord)>,
    analyses: Vec<AnalysisRecord>,
    quality: Vec<QualityRecord>,
    retrain: Vec<RetrainRecord>,
    failures: Vec<Failure>,
    timings: Vec<TimingRecord>,
}

struct Plan<'a> {
    config: &'a ExperimentConfig,
    data: &'a Dataset,
    sensitive: &'a [String],
    rules: &'a [GroupRule],
}

fn modes(selector: Selector) -> &'static [Mode] {
    match selector {
        Selector::None => &[Mode::Base],
        _ => &[Mode::Base, Mode::Causal],
    }
}

fn file_stem(parts: &[&str]) -> String {
    parts.join("_").replace(['/', ' '], "-")
}

impl Plan<'_> {
    fn key(&self, (si, mi, gi, mode): CaseIndex) -> String {
        let c = self.config;
        format!(
            "{}/{}/{}/{}/{}",
            c.dataset,
            self.sensitive[si],
            c.models[mi].name,
            c.generators[gi].kind.name(),
            mode.name()
        )
    }

    fn run(&self, run: usize) -> RunOutput {
        let c = self.config;
        let mut out = RunOutput::default();
        let split_seed = seed::derive(c.seed, &format!("split/{}", c.dataset), run as u64);
        let (train_data, test_data) = match split_train_test(self.data, c.train_fraction, split_seed) {
            Ok(x) => x,
            Err(e) => {
                out.failures.push(Failure {
                    context: format!("{}/run{run}/split", c.dataset),
                    error: e.to_string(),
                });
                return out;
            }
        };
        let mut models: Vec<Option<Model>> = Vec::new();
        for named in &c.models {
            let mut cfg = named.config.clone();
            cfg.seed = seed::derive(c.seed, &format!("model/{}/{}", c.dataset, named.name), run as u64);
            let context = format!("{}/{}/run{run}", c.dataset, named.name);
            let trained = train(&train_data, &cfg).map_err(ExperimentError::from).and_then(|m| {
                if c.save_models {
                    let dir = c.output_dir.join("models");
                    std::fs::create_dir_all(&dir)?;
                    m.save(dir.join(format!(
                        "{}.json",
                        file_stem(&[&c.dataset, &named.name, &format!("run{run}")])
                    )))?;
                }
                Ok(m)
            });
            match trained {
                Ok(m) => {
                    out.quality.push(QualityRecord {
                        dataset: c.dataset.clone(),
                        model: named.name.clone(),
                        run,
                        quality: model_quality(&m, &test_data),
                    });
                    models.push(Some(m));
                }
                Err(e) => {
                    out.failures.push(Failure {
                        context,
                        error: e.to_string(),
                    });
                    models.push(None);
                }
            }
        }
        for (si, sens) in self.sensitive.iter().enumerate() {
            let started = Instant::now();
            let analysis = match analyze(c, &train_data, sens, run) {
                Ok(a) => a,
                Err(e) => {
                    out.failures.push(Failure {
                        context: format!("{}/{sens}/run{run}/analysis", c.dataset),
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            let analysis_secs = started.elapsed().as_secs_f64();
            let s = train_data.schema().index_of(sens).expect("checked by analyze");
            out.analyses.push(AnalysisRecord {
                dataset: c.dataset.clone(),
                sensitive: sens.clone(),
                run,
                selector: c.selector.name().to_string(),
                edges: analysis.graph.as_ref().map(CausalGraph::n_edges),
                scores: analysis.scores.clone(),
                selected: analysis.selected.map(|j| train_data.schema().name(j).to_string()),
            });
            for (mi, model) in models.iter().enumerate() {
                let Some(model) = model else { continue };
                for (gi, spec) in c.generators.iter().enumerate() {
                    let ctx = (si, mi, gi);
                    let started = Instant::now();
                    let result = self.generate(ctx, run, spec, model, &test_data, s, analysis.selected, &mut out);
                    let suite = match result {
                        Ok(suite) => suite,
                        Err(e) => {
                            out.failures.push(Failure {
                                context: format!(
                                    "{}/run{run}",
                                    self.key((si, mi, gi, Mode::Base)).trim_end_matches("/base")
                                ),
                                error: e.to_string(),
                            });
                            continue;
                        }
                    };
                    out.timings.push(TimingRecord {
                        context: self.key((si, mi, gi, Mode::Base)).trim_end_matches("/base").to_string(),
                        run,
                        analysis_secs,
                        generation_secs: started.elapsed().as_secs_f64(),
                    });
                    if c.retrain {
                        let mode = suite.mode;
                        if let Err(e) = self.retrain(
                            ctx,
                            run,
                            spec,
                            model,
                            &train_data,
                            &test_data,
                            s,
                            analysis.selected,
                            &suite,
                            &mut out,
                        ) {
                            out.failures.push(Failure {
                                context: format!("{}/run{run}/retrain", self.key((si, mi, gi, mode))),
                                error: e.to_string(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Runs every mode for one case and returns the suite the retrain loop
    /// should correct (the last mode's).
    #[allow(clippy::too_many_arguments)]
    fn generate(
        &self,
        (si, mi, gi): (usize, usize, usize),
        run: usize,
        spec: &GeneratorSpec,
        model: &Model,
        test_data: &Dataset,
        s: usize,
        fixed: Option<usize>,
        out: &mut RunOutput,
    ) -> Result<TestSuite, ExperimentError> {
        let c = self.config;
        let base_key = self.key((si, mi, gi, Mode::Base));
        let case = base_key.trim_end_matches("/base");
        let gen_seed = seed::derive(c.seed, &format!("generate/{case}"), run as u64);
        let mut records = Vec::new();
        let mut last = None;
        for &mode in modes(c.selector) {
            let causal = if mode == Mode::Causal { fixed } else { None };
            let mut suite = run_generator(spec, model, test_data, s, causal, c.budget, gen_seed)?;
            if mode == Mode::Causal && fixed.is_none() {
                suite.mode = Mode::Causal;
                suite.fallback = true;
            }
            let report = fairness_report(&suite, model, test_data, &self.rules[si]);
            let report = match report {
                Ok(r) => r,
                Err(crate::metrics::MetricError::EmptySuite) => crate::metrics::FairnessReport {
                    idi_ratio: 0.0,
                    eod: None,
                    spd: None,
                    idis: 0,
                    samples: 0,
                },
                Err(e) => return Err(e.into()),
            };
            if c.export_suites {
                let dir = c.output_dir.join("suites");
                std::fs::create_dir_all(&dir)?;
                let key = self.key((si, mi, gi, mode));
                let name = format!("{}.txt", file_stem(&[&key, &format!("run{run}")]));
                suite.write_export(std::fs::File::create(dir.join(name))?)?;
            }
            records.push((
                (si, mi, gi, mode),
                RunRecord {
                    run,
                    seed: gen_seed,
                    report,
                    ledger: suite.ledger,
                    budget_unreachable: suite.budget_unreachable,
                    fallback: suite.fallback,
                    fixed_feature: causal.map(|j| test_data.schema().name(j).to_string()),
                },
            ));
            last = Some(suite);
        }
        out.records.extend(records);
        Ok(last.expect("at least one mode"))
    }

    #[allow(clippy::too_many_arguments)]
    fn retrain(
        &self,
        (si, mi, gi): (usize, usize, usize),
        run: usize,
        spec: &GeneratorSpec,
        model: &Model,
        train_data: &Dataset,
        test_data: &Dataset,
        s: usize,
        fixed: Option<usize>,
        suite: &TestSuite,
        out: &mut RunOutput,
    ) -> Result<(), ExperimentError> {
        let c = self.config;
        let key = self.key((si, mi, gi, suite.mode));
        let corrections = correct_pairs(suite, model);
        let plan = RetestPlan {
            spec,
            sensitive: s,
            causal: if suite.mode == Mode::Causal { fixed } else { None },
            rule: &self.rules[si],
            budget: c.budget,
            runs: 1,
            seed: seed::derive(c.seed, &format!("retest/{key}"), run as u64),
        };
        let (_, outcome) = retrain_and_retest(&c.models[mi].config, model, train_data, &corrections, test_data, &plan)?;
        out.retrain.push(RetrainRecord {
            key,
            run,
            corrections: outcome.corrections,
            before: outcome.before[0],
            after: outcome.after[0],
            quality_before: outcome.quality_before,
            quality_after: outcome.quality_after,
            quality_delta: outcome.quality_delta,
        });
        Ok(())
    }
}

fn case_result(plan: &Plan<'_>, index: CaseIndex, runs: Vec<RunRecord>) -> CaseResult {
    let c = plan.config;
    let (si, mi, gi, mode) = index;
    let pick = |f: fn(&RunRecord) -> Option<f64>| Summary::of(&runs.iter().filter_map(f).collect::<Vec<_>>());
    let mut ledger = PairLedger::default();
    for r in &runs {
        ledger.add(&r.ledger);
    }
    CaseResult {
        key: plan.key(index),
        dataset: c.dataset.clone(),
        sensitive: plan.sensitive[si].clone(),
        model: c.models[mi].name.clone(),
        generator: c.generators[gi].kind.name().to_string(),
        mode,
        idi_ratio: pick(|r| Some(r.report.idi_ratio)),
        eod: pick(|r| r.report.eod),
        spd: pick(|r| r.report.spd),
        idis: pick(|r| Some(r.report.idis as f64)),
        samples: pick(|r| Some(r.report.samples as f64)),
        ledger,
        fallback_runs: runs.iter().filter(|r| r.fallback).count(),
        unreachable_runs: runs.iter().filter(|r| r.budget_unreachable).count(),
        runs,
    }
}

/// Per-run values of one metric.
fn metric_values(case: &CaseResult, metric: &str) -> Vec<f64> {
    case.runs
        .iter()
        .filter_map(|r| match metric {
            "idi_ratio" => Some(r.report.idi_ratio),
            "eod" => r.report.eod,
            "spd" => r.report.spd,
            _ => None,
        })
        .collect()
}

const METRICS: [&str; 3] = ["idi_ratio", "eod", "spd"];

fn comparison(key: String, metric: &str, a: &[f64], b: &[f64]) -> MetricComparison {
    match compare(a, b) {
        Ok(r) => MetricComparison {
            key,
            metric: metric.to_string(),
            result: Some(r),
            skipped: None,
        },
        Err(e @ (StatsError::TooFewSamples(..) | StatsError::EmptySample)) => MetricComparison {
            key,
            metric: metric.to_string(),
            result: None,
            skipped: Some(e.to_string()),
        },
    }
}

/// Compares matching cases of two reports, `a` against `b`, metric by
/// metric over their per-run values.
pub fn compare_reports(a: &ExperimentReport, b: &ExperimentReport) -> Vec<MetricComparison> {
    let by_key: BTreeMap<&str, &CaseResult> = b.cases.iter().map(|c| (c.key.as_str(), c)).collect();
    let mut out = Vec::new();
    for case in &a.cases {
        let Some(other) = by_key.get(case.key.as_str()) else {
            continue;
        };
        for metric in METRICS {
            out.push(comparison(
                case.key.clone(),
                metric,
                &metric_values(case, metric),
                &metric_values(other, metric),
            ));
        }
    }
    out
}

/// Runs the whole experiment. Failures of individual stages are collected
/// in the report; errors are returned only for problems with the config or
/// the input files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let schema = Schema::from_path(&config.schema)
        .map_err(|e| ExperimentError::from(e).within(config.schema.display().to_string()))?;
    let data = load_csv(&config.data, &schema)
        .map_err(|e| ExperimentError::from(e).within(config.data.display().to_string()))?;
    run_on(config, &data)
}

/// [`run_experiment`] on an already loaded dataset.
pub fn run_on(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let schema = data.schema();
    let sensitive: Vec<String> = if config.sensitive.is_empty() {
        schema.sensitive.clone()
    } else {
        config.sensitive.clone()
    };
    if sensitive.is_empty() {
        return Err(ExperimentError::Config("no sensitive feature given".into()));
    }
    let mut rules = Vec::new();
    for s in &sensitive {
        schema
            .index_of(s)
            .map_err(|_| ExperimentError::Config(format!("unknown sensitive feature {s:?}")))?;
        let rule = match config.group_rule(s) {
            Some(r) => r.clone(),
            None => GroupRule::default_for(data, s)?,
        };
        rules.push(rule);
    }
    let plan = Plan {
        config,
        data,
        sensitive: &sensitive,
        rules: &rules,
    };
    let outputs: Vec<RunOutput> = (0..config.runs).into_par_iter().map(|r| plan.run(r)).collect();

    let mut grouped: BTreeMap<CaseIndex, Vec<RunRecord>> = BTreeMap::new();
    let mut report = ExperimentReport {
        version: REPORT_VERSION,
        dataset: config.dataset.clone(),
        selector: config.selector.name().to_string(),
        budget: config.budget,
        runs: config.runs,
        seed: config.seed,
        cases: Vec::new(),
        comparisons: Vec::new(),
        analyses: Vec::new(),
        quality: Vec::new(),
        retrain: Vec::new(),
        failures: Vec::new(),
    };
    let mut timings = Vec::new();
    for o in outputs {
        for (idx, rec) in o.records {
            grouped.entry(idx).or_default().push(rec);
        }
        report.analyses.extend(o.analyses);
        report.quality.extend(o.quality);
        report.retrain.extend(o.retrain);
        report.failures.extend(o.failures);
        timings.extend(o.timings);
    }
    for (si, _) in sensitive.iter().enumerate() {
        for (mi, _) in config.models.iter().enumerate() {
            for (gi, _) in config.generators.iter().enumerate() {
                for &mode in modes(config.selector) {
                    let idx = (si, mi, gi, mode);
                    if let Some(runs) = grouped.remove(&idx) {
                        report.cases.push(case_result(&plan, idx, runs));
                    }
                }
                if config.selector != Selector::None {
                    let base = report
                        .cases
                        .iter()
                        .find(|c| c.key == plan.key((si, mi, gi, Mode::Base)));
                    let causal = report
                        .cases
                        .iter()
                        .find(|c| c.key == plan.key((si, mi, gi, Mode::Causal)));
                    if let (Some(b), Some(k)) = (base, causal) {
                        let key = b.key.trim_end_matches("/base").to_string();
                        for metric in METRICS {
                            let cmp = comparison(
                                key.clone(),
                                metric,
                                &metric_values(k, metric),
                                &metric_values(b, metric),
                            );
                            report.comparisons.push(cmp);
                        }
                    }
                }
            }
        }
    }
    Ok(ExperimentOutput { report, timings })
}
