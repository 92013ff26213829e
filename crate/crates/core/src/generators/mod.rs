//! Test generation: the discrimination predicates, value perturbation, the
//! base search strategies and the causally guided wrapper around them.
//!
//! A run draws seed pairs from the test data and walks them through the
//! input space, changing the same features on both members so that the pair
//! only ever differs on its fixed set. In [`Mode::Base`] the fixed set is the
//! sensitive feature alone. In [`Mode::Causal`] it also holds the selected
//! causal feature, so pairs are judged by the relaxed definition while they
//! are searched and then re-paired under the true one.

mod search;

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, ValueDomain};
use crate::models::Classifier;

pub use search::{run_base_generator, run_causal_generator, run_generator};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("sample width {got} does not match the model input width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("sensitive and causal feature share index {0}")]
    IndexCollision(usize),
    #[error("feature index {index} out of range for {width} features")]
    IndexOutOfRange { index: usize, width: usize },
    #[error("feature {0} has an empty value domain")]
    EmptyDomain(usize),
    #[error("sensitive feature {0} has a single value, no pair can differ on it")]
    DegenerateSensitive(usize),
    #[error("test data is empty")]
    EmptyTestData,
    #[error("malformed suite export: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Random,
    SgLite,
    AdfLite,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Random => "random",
            GeneratorKind::SgLite => "sg_lite",
            GeneratorKind::AdfLite => "adf_lite",
        }
    }
}

/// Where the partner of a generated sample may come from when it is
/// re-paired under the true definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerSearch {
    /// A test row equal to the sample everywhere except the sensitive feature.
    TestRows,
    /// The sample itself with its sensitive value replaced by another value
    /// of the domain.
    SensitiveVariants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Exploration steps before a seed pair is abandoned.
    pub global_steps: usize,
    /// Refinement steps around a discriminatory pair.
    pub local_steps: usize,
    /// Domain positions moved per gradient step.
    pub step_size: i64,
    /// Consecutive candidate pairs without a new unique sample before the
    /// run gives up on reaching the budget.
    pub max_attempts_per_pair: usize,
    pub partner_search: PartnerSearch,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Random,
            global_steps: 10,
            local_steps: 20,
            step_size: 1,
            max_attempts_per_pair: 1000,
            partner_search: PartnerSearch::SensitiveVariants,
        }
    }
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        GeneratorSpec {
            kind,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    pub a_from_test: bool,
    pub b_from_test: bool,
}

impl Pair {
    pub fn new(a: Vec<i64>, b: Vec<i64>) -> Self {
        Pair {
            a,
            b,
            a_from_test: false,
            b_from_test: false,
        }
    }

    pub fn has_test_member(&self) -> bool {
        self.a_from_test || self.b_from_test
    }

    /// Order-independent identity of the pair.
    pub(crate) fn key(&self) -> (Vec<i64>, Vec<i64>) {
        if self.a <= self.b {
            (self.a.clone(), self.b.clone())
        } else {
            (self.b.clone(), self.a.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Causal,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Causal => "causal",
        }
    }
}

/// Pair accounting for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLedger {
    /// Unique pairs valid under the true definition (base runs).
    pub pairs_without_relaxation: u64,
    /// Unique pairs valid under the relaxed definition, before repair.
    pub pairs_with_relaxation: u64,
    /// Relaxed-valid pairs that fail the true definition.
    pub invalid_pairs: u64,
    /// Invalid pairs where at least one member found a true partner.
    pub repaired_pairs: u64,
    /// Members of invalid pairs left without a partner.
    pub failed_samples: u64,
}

impl PairLedger {
    pub fn add(&mut self, other: &PairLedger) {
        self.pairs_without_relaxation += other.pairs_without_relaxation;
        self.pairs_with_relaxation += other.pairs_with_relaxation;
        self.invalid_pairs += other.invalid_pairs;
        self.repaired_pairs += other.repaired_pairs;
        self.failed_samples += other.failed_samples;
    }

    pub fn repair_rate(&self) -> Option<f64> {
        (self.invalid_pairs > 0).then(|| self.repaired_pairs as f64 / self.invalid_pairs as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    /// Generated samples in discovery order, without duplicates.
    pub unique_samples: Vec<Vec<i64>>,
    /// Test row each sample was seeded from, aligned with `unique_samples`.
    pub origins: Vec<usize>,
    /// Samples of `unique_samples` that belong to a pair valid under the
    /// true definition.
    pub idi_samples: Vec<Vec<i64>>,
    /// The verified pairs behind `idi_samples`.
    pub idi_pairs: Vec<Pair>,
    pub ledger: PairLedger,
    pub seed: u64,
    pub mode: Mode,
    /// Set when the run stopped before reaching its budget.
    pub budget_unreachable: bool,
    /// Set when a causal run had no causal feature and ran the base search.
    pub fallback: bool,
}

impl TestSuite {
    pub fn empty(mode: Mode, seed: u64) -> Self {
        TestSuite {
            unique_samples: Vec::new(),
            origins: Vec::new(),
            idi_samples: Vec::new(),
            idi_pairs: Vec::new(),
            ledger: PairLedger::default(),
            seed,
            mode,
            budget_unreachable: false,
            fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.unique_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique_samples.is_empty()
    }

    /// Union of samples and pairs, ledger counts added.
    pub fn merge(&mut self, other: &TestSuite) {
        let mut seen: HashSet<Vec<i64>> = self.unique_samples.iter().cloned().collect();
        for (s, &o) in other.unique_samples.iter().zip(&other.origins) {
            if seen.insert(s.clone()) {
                self.unique_samples.push(s.clone());
                self.origins.push(o);
            }
        }
        let mut idi: HashSet<Vec<i64>> = self.idi_samples.iter().cloned().collect();
        for s in &other.idi_samples {
            if idi.insert(s.clone()) {
                self.idi_samples.push(s.clone());
            }
        }
        let mut pairs: HashSet<(Vec<i64>, Vec<i64>)> = self.idi_pairs.iter().map(Pair::key).collect();
        for p in &other.idi_pairs {
            if pairs.insert(p.key()) {
                self.idi_pairs.push(p.clone());
            }
        }
        self.ledger.add(&other.ledger);
        self.budget_unreachable |= other.budget_unreachable;
        self.fallback |= other.fallback;
    }

    /// Writes one sample per line as comma-separated codes, then a `# ledger`
    /// line followed by a JSON block.
    pub fn write_export<W: Write>(&self, mut w: W) -> Result<(), GenError> {
        writeln!(w, "# samples")?;
        for s in &self.unique_samples {
            let line: Vec<String> = s.iter().map(i64::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        writeln!(w, "# ledger")?;
        let idi: HashSet<&Vec<i64>> = self.idi_samples.iter().collect();
        let block = ExportLedger {
            mode: self.mode,
            seed: self.seed,
            samples: self.unique_samples.len(),
            idis: self.idi_samples.len(),
            idi_rows: (0..self.unique_samples.len())
                .filter(|&i| idi.contains(&self.unique_samples[i]))
                .collect(),
            budget_unreachable: self.budget_unreachable,
            fallback: self.fallback,
            ledger: self.ledger,
        };
        serde_json::to_writer_pretty(&mut w, &block)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn export_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_export(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii export")
    }
}

/// The ledger block of a suite export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportLedger {
    pub mode: Mode,
    pub seed: u64,
    pub samples: usize,
    pub idis: usize,
    /// Zero-based sample lines that are discriminatory.
    pub idi_rows: Vec<usize>,
    pub budget_unreachable: bool,
    pub fallback: bool,
    pub ledger: PairLedger,
}

/// Parses a suite export back into its samples and ledger block.
pub fn read_export<R: BufRead>(r: R) -> Result<(Vec<Vec<i64>>, ExportLedger), GenError> {
    let mut samples = Vec::new();
    let mut json = String::new();
    let mut in_ledger = false;
    for line in r.lines() {
        let line = line?;
        if in_ledger {
            json.push_str(&line);
            json.push('\n');
        } else if line == "# ledger" {
            in_ledger = true;
        } else if line == "# samples" || line.is_empty() {
            continue;
        } else {
            let row = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<i64>()
                        .map_err(|_| GenError::Malformed(format!("bad code in {line:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            samples.push(row);
        }
    }
    if !in_ledger {
        return Err(GenError::Malformed("missing ledger block".into()));
    }
    Ok((samples, serde_json::from_str(&json)?))
}

fn check_pair(pair: &Pair, model: &dyn Classifier) -> Result<(), GenError> {
    let expected = model.input_width();
    for got in [pair.a.len(), pair.b.len()] {
        if got != expected {
            return Err(GenError::WidthMismatch { expected, got });
        }
    }
    Ok(())
}

fn check_index(index: usize, width: usize) -> Result<(), GenError> {
    if index >= width {
        return Err(GenError::IndexOutOfRange { index, width });
    }
    Ok(())
}

/// Indices where the two samples differ.
pub fn differing_indices(a: &[i64], b: &[i64]) -> Vec<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

/// The pair differs exactly at `sensitive` and the model labels differ.
pub fn is_true_idi(pair: &Pair, model: &dyn Classifier, sensitive: usize) -> Result<bool, GenError> {
    check_pair(pair, model)?;
    check_index(sensitive, pair.a.len())?;
    let diff = differing_indices(&pair.a, &pair.b);
    Ok(diff == [sensitive] && model.label_of_codes(&pair.a) != model.label_of_codes(&pair.b))
}

/// The pair differs somewhere inside `{sensitive, causal}`, nowhere outside
/// it, and the model labels differ.
pub fn is_relaxed_idi(pair: &Pair, model: &dyn Classifier, sensitive: usize, causal: usize) -> Result<bool, GenError> {
    check_pair(pair, model)?;
    check_index(sensitive, pair.a.len())?;
    check_index(causal, pair.a.len())?;
    if sensitive == causal {
        return Err(GenError::IndexCollision(sensitive));
    }
    let diff = differing_indices(&pair.a, &pair.b);
    let inside = !diff.is_empty() && diff.iter().all(|&i| i == sensitive || i == causal);
    Ok(inside && model.label_of_codes(&pair.a) != model.label_of_codes(&pair.b))
}

/// Resamples every index in `mutable` uniformly from its domain, avoiding
/// the current value unless the domain is a singleton.
pub fn perturb_values<R: Rng + ?Sized>(
    sample: &[i64],
    mutable: &[usize],
    domains: &[ValueDomain],
    rng: &mut R,
) -> Result<Vec<i64>, GenError> {
    let mut out = sample.to_vec();
    for &j in mutable {
        check_index(j, sample.len())?;
        let d = domains.get(j).ok_or(GenError::IndexOutOfRange {
            index: j,
            width: domains.len(),
        })?;
        if d.is_empty() {
            return Err(GenError::EmptyDomain(j));
        }
        out[j] = d.sample_other(sample[j], rng);
    }
    Ok(out)
}

/// True-valid partner search for one sample, exposed for repair of pairs
/// built outside a run.
pub fn repair_invalid<R: Rng + ?Sized>(
    pair: &Pair,
    test_data: &Dataset,
    model: &dyn Classifier,
    sensitive: usize,
    search: PartnerSearch,
    rng: &mut R,
) -> Result<(Vec<Pair>, usize), GenError> {
    check_pair(pair, model)?;
    check_index(sensitive, pair.a.len())?;
    if is_true_idi(pair, model, sensitive)? {
        return Ok((vec![pair.clone()], 0));
    }
    let mut out = Vec::new();
    let mut failed = 0;
    for member in [&pair.a, &pair.b] {
        match search::find_partner(member, test_data, model, sensitive, search, rng) {
            Some((partner, from_test)) => out.push(Pair {
                a: member.clone(),
                b: partner,
                a_from_test: false,
                b_from_test: from_test,
            }),
            None => failed += 1,
        }
    }
    Ok((out, failed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Model;
    use crate::seed;

    /// Positive iff feature 0 is set.
    fn by_first() -> Model {
        Model::logistic_from_weights(vec![10.0, 0.0, 0.0, 0.0, 0.0], -5.0)
    }

    #[test]
    fn true_idi_examples() {
        let m = by_first();
        let p = Pair::new(vec![0, 7, 4, 5, 1], vec![1, 7, 4, 5, 1]);
        assert!(is_true_idi(&p, &m, 0).unwrap());
        let same = Pair::new(vec![0, 7, 4, 5, 1], vec![0, 7, 4, 5, 1]);
        assert!(!is_true_idi(&same, &m, 0).unwrap());
        let extra = Pair::new(vec![0, 7, 4, 5, 1], vec![1, 7, 3, 5, 1]);
        assert!(!is_true_idi(&extra, &m, 0).unwrap());
        assert!(is_relaxed_idi(&extra, &m, 0, 2).unwrap());
        assert!(!is_relaxed_idi(&extra, &m, 0, 3).unwrap());
    }

    #[test]
    fn predicate_errors() {
        let m = by_first();
        let short = Pair::new(vec![0, 1], vec![1, 1]);
        assert!(matches!(
            is_true_idi(&short, &m, 0),
            Err(GenError::WidthMismatch { expected: 5, got: 2 })
        ));
        let p = Pair::new(vec![0; 5], vec![1, 0, 0, 0, 0]);
        assert!(matches!(is_relaxed_idi(&p, &m, 1, 1), Err(GenError::IndexCollision(1))));
        assert!(matches!(is_true_idi(&p, &m, 9), Err(GenError::IndexOutOfRange { .. })));
    }

    #[test]
    fn perturb_respects_fixed_and_singletons() {
        let domains = vec![
            ValueDomain::range(17, 90),
            ValueDomain::set(vec![3]),
            ValueDomain::range(0, 4),
            ValueDomain::range(1, 99),
        ];
        let mut rng = seed::rng(1);
        let x = vec![30, 3, 2, 40];
        for _ in 0..200 {
            let y = perturb_values(&x, &[1, 2], &domains, &mut rng).unwrap();
            assert_eq!(y[0], 30);
            assert_eq!(y[3], 40);
            assert_eq!(y[1], 3);
            assert_ne!(y[2], 2);
            assert!(domains[2].contains(y[2]));
        }
        let empty = vec![ValueDomain::Set(vec![])];
        assert!(matches!(
            perturb_values(&[0], &[0], &empty, &mut rng),
            Err(GenError::EmptyDomain(0))
        ));
    }

    #[test]
    fn ledger_addition_and_rate() {
        let mut l = PairLedger {
            invalid_pairs: 4,
            repaired_pairs: 3,
            ..Default::default()
        };
        l.add(&l.clone());
        assert_eq!(l.invalid_pairs, 8);
        assert_eq!(l.repair_rate(), Some(0.75));
        assert_eq!(PairLedger::default().repair_rate(), None);
    }

    #[test]
    fn export_round_trip() {
        let mut suite = TestSuite::empty(Mode::Causal, 9);
        suite.unique_samples = vec![vec![1, 2, 3], vec![-4, 5, 6]];
        suite.idi_samples = vec![vec![-4, 5, 6]];
        suite.ledger.invalid_pairs = 2;
        let text = suite.export_string();
        let (samples, block) = read_export(text.as_bytes()).unwrap();
        assert_eq!(samples, suite.unique_samples);
        assert_eq!(block.idi_rows, vec![1]);
        assert_eq!(block.ledger, suite.ledger);
        assert_eq!(block.mode, Mode::Causal);
        assert!(read_export("1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn merge_unions_and_adds() {
        let mut a = TestSuite::empty(Mode::Base, 1);
        a.unique_samples = vec![vec![1], vec![2]];
        a.origins = vec![0, 1];
        a.ledger.pairs_without_relaxation = 1;
        let mut b = TestSuite::empty(Mode::Base, 2);
        b.unique_samples = vec![vec![2], vec![3]];
        b.origins = vec![1, 2];
        b.ledger.pairs_without_relaxation = 2;
        a.merge(&b);
        assert_eq!(a.unique_samples, vec![vec![1], vec![2], vec![3]]);
        assert_eq!(a.ledger.pairs_without_relaxation, 3);
    }
}
