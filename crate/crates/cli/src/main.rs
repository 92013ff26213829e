use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairprobe::data::{load_csv, split_train_test, Schema};
use fairprobe::experiment::{
    analyze, compare_reports, run_experiment, AnalysisRecord, ExperimentConfig, ExperimentReport, Selector,
};
use fairprobe::generators::{GeneratorKind, GeneratorSpec};
use fairprobe::seed;

#[derive(Parser)]
#[command(
    name = "fairprobe",
    version,
    about = "Causality-guided fairness testing for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Causal graph, direct-feature effects and the selected feature.
    Analyze(ConfigArgs),
    /// Generate suites in both modes and measure them.
    Test(ConfigArgs),
    /// Statistics between the matching cases of two reports.
    Compare {
        first: PathBuf,
        second: PathBuf,
        /// Write the comparisons here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test, correct the discovered pairs, retrain and test again.
    Retrain(ConfigArgs),
    /// Re-emit a JSON report and its CSV table.
    Report {
        report: PathBuf,
        /// Directory for report.json and report.csv; stdout gets the CSV
        /// when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorArg {
    Causal,
    Correlation,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Random,
    SgLite,
    AdfLite,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment document (TOML). Flags below override its fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Repeatable.
    #[arg(long)]
    sensitive: Vec<String>,
    /// Repeatable; replaces the configured generators with default settings.
    #[arg(long, value_enum)]
    generator: Vec<GeneratorArg>,
    #[arg(long, value_enum)]
    selector: Option<SelectorArg>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    k_percent: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    bootstrap_repeats: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    edge_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "FAIRPROBE_OUT")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    export_suites: bool,
    #[arg(long)]
    save_models: bool,
}

impl ConfigArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.dataset {
            c.dataset = v;
        }
        if let Some(v) = self.data {
            c.data = v;
        }
        if let Some(v) = self.schema {
            c.schema = v;
        }
        if !self.sensitive.is_empty() {
            c.sensitive = self.sensitive;
        }
        if !self.generator.is_empty() {
            c.generators = self
                .generator
                .iter()
                .map(|g| {
                    GeneratorSpec::new(match g {
                        GeneratorArg::Random => GeneratorKind::Random,
                        GeneratorArg::SgLite => GeneratorKind::SgLite,
                        GeneratorArg::AdfLite => GeneratorKind::AdfLite,
                    })
                })
                .collect();
        }
        if let Some(v) = self.selector {
            c.selector = match v {
                SelectorArg::Causal => Selector::Causal,
                SelectorArg::Correlation => Selector::Correlation,
                SelectorArg::None => Selector::None,
            };
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set!(
            budget,
            runs,
            k_percent,
            m,
            bootstrap_repeats,
            train_fraction,
            edge_threshold,
            seed,
            output_dir
        );
        c.export_suites |= self.export_suites;
        c.save_models |= self.save_models;
        if c.data.as_os_str().is_empty() || c.schema.as_os_str().is_empty() {
            bail!("both a data file and a schema are required (--data, --schema or a config)");
        }
        c.validate()?;
        Ok(c)
    }
}

fn run_analyze(config: &ExperimentConfig) -> Result<()> {
    let schema = Schema::from_path(&config.schema)?;
    let data = load_csv(&config.data, &schema)?;
    let sensitive = if config.sensitive.is_empty() {
        schema.sensitive.clone()
    } else {
        config.sensitive.clone()
    };
    let dir = config.output_dir.join("analysis");
    std::fs::create_dir_all(&dir)?;
    let mut records = Vec::new();
    for run in 0..config.runs {
        let split_seed = seed::derive(config.seed, &format!("split/{}", config.dataset), run as u64);
        let (train, _) = split_train_test(&data, config.train_fraction, split_seed)?;
        for s in &sensitive {
            let a = analyze(config, &train, s, run).with_context(|| format!("{s}, run {run}"))?;
            if let Some(g) = &a.graph {
                std::fs::write(dir.join(format!("{s}_run{run}.edges")), g.to_edge_list())?;
            }
            let selected = a.selected.map(|j| schema.name(j).to_string());
            println!("{s} run {run}: {}", selected.as_deref().unwrap_or("(none)"));
            records.push(AnalysisRecord {
                dataset: config.dataset.clone(),
                sensitive: s.clone(),
                run,
                selector: config.selector.name().to_string(),
                edges: a.graph.as_ref().map(|g| g.n_edges()),
                scores: a.scores,
                selected,
            });
        }
    }
    let path = dir.join("analysis.json");
    std::fs::write(&path, serde_json::to_string_pretty(&records)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run_test(mut config: ExperimentConfig, retrain: bool) -> Result<ExitCode> {
    config.retrain = retrain;
    let output = run_experiment(&config)?;
    for p in output.write_to(&config.output_dir)? {
        eprintln!("wrote {}", p.display());
    }
    let failures = &output.report.failures;
    for f in failures {
        log::error!("{}: {}", f.context, f.error);
    }
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Analyze(args) => run_analyze(&args.resolve()?).map(|_| ExitCode::SUCCESS),
        Command::Test(args) => run_test(args.resolve()?, false),
        Command::Retrain(args) => run_test(args.resolve()?, true),
        Command::Compare { first, second, out } => {
            let a = ExperimentReport::load(&first).with_context(|| first.display().to_string())?;
            let b = ExperimentReport::load(&second).with_context(|| second.display().to_string())?;
            let mut text = serde_json::to_string_pretty(&compare_reports(&a, &b))?;
            text.push('\n');
            write_or_print(&text, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { report, out } => {
            let r = ExperimentReport::load(&report).with_context(|| report.display().to_string())?;
            match out {
                Some(dir) => {
                    for p in r.write_to(&dir)? {
                        eprintln!("wrote {}", p.display());
                    }
                }
                None => write_or_print(&r.csv_string()?, None)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
