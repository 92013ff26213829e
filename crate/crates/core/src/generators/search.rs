//! The search loop shared by base and causal runs, and the three walk
//! strategies.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{check_index, GenError, GeneratorKind, GeneratorSpec, Mode, Pair, PairLedger, PartnerSearch, TestSuite};
use crate::data::{Dataset, ValueDomain};
use crate::models::Classifier;
use crate::seed::{self, SeededRng};

const SENTINEL: i64 = i64::MIN;

fn masked(x: &[i64], s: usize) -> Vec<i64> {
    let mut k = x.to_vec();
    k[s] = SENTINEL;
    k
}

/// One true-valid partner for `x`, if any, chosen at random among the
/// eligible candidates. The flag tells whether the partner is a test row.
pub(crate) fn find_partner<R: Rng + ?Sized>(
    x: &[i64],
    test: &Dataset,
    model: &dyn Classifier,
    s: usize,
    search: PartnerSearch,
    rng: &mut R,
) -> Option<(Vec<i64>, bool)> {
    let lx = model.label_of_codes(x);
    match search {
        PartnerSearch::TestRows => {
            let key = masked(x, s);
            let eligible: Vec<&[i64]> = test
                .rows()
                .filter(|r| r[s] != x[s] && masked(r, s) == key && model.label_of_codes(r) != lx)
                .collect();
            eligible.choose(rng).map(|r| (r.to_vec(), true))
        }
        PartnerSearch::SensitiveVariants => {
            let mut values = test.domain(s).values();
            values.retain(|&v| v != x[s]);
            values.shuffle(rng);
            let mut y = x.to_vec();
            for v in values {
                y[s] = v;
                if model.label_of_codes(&y) != lx {
                    return Some((y, false));
                }
            }
            None
        }
    }
}

/// Base-mode run: pairs differ only on the sensitive feature.
pub fn run_base_generator(
    spec: &GeneratorSpec,
    model: &dyn Classifier,
    test_data: &Dataset,
    sensitive: usize,
    budget: usize,
    seed: u64,
) -> Result<TestSuite, GenError> {
    run_generator(spec, model, test_data, sensitive, None, budget, seed)
}

/// Causal-mode run: pairs differ on the sensitive and the causal feature
/// while searched, then are re-paired under the true definition.
pub fn run_causal_generator(
    spec: &GeneratorSpec,
    model: &dyn Classifier,
    test_data: &Dataset,
    sensitive: usize,
    causal: usize,
    budget: usize,
    seed: u64,
) -> Result<TestSuite, GenError> {
    if sensitive == causal {
        return Err(GenError::IndexCollision(sensitive));
    }
    run_generator(spec, model, test_data, sensitive, Some(causal), budget, seed)
}

/// Runs in causal mode when `causal` is given, base mode otherwise.
pub fn run_generator(
    spec: &GeneratorSpec,
    model: &dyn Classifier,
    test_data: &Dataset,
    sensitive: usize,
    causal: Option<usize>,
    budget: usize,
    seed: u64,
) -> Result<TestSuite, GenError> {
    let mode = if causal.is_some() { Mode::Causal } else { Mode::Base };
    let width = test_data.n_features();
    if model.input_width() != width {
        return Err(GenError::WidthMismatch {
            expected: model.input_width(),
            got: width,
        });
    }
    check_index(sensitive, width)?;
    if let Some(c) = causal {
        check_index(c, width)?;
        if c == sensitive {
            return Err(GenError::IndexCollision(c));
        }
    }
    if budget == 0 {
        return Ok(TestSuite::empty(mode, seed));
    }
    if test_data.is_empty() {
        return Err(GenError::EmptyTestData);
    }
    if let Some(j) = (0..width).find(|&j| test_data.domain(j).is_empty()) {
        return Err(GenError::EmptyDomain(j));
    }
    if test_data.domain(sensitive).len() < 2 {
        return Err(GenError::DegenerateSensitive(sensitive));
    }
    let mut engine = Engine::new(spec, model, test_data, sensitive, causal, budget, seed);
    engine.run();
    Ok(engine.finish())
}

struct Engine<'a> {
    spec: &'a GeneratorSpec,
    model: &'a dyn Classifier,
    test: &'a Dataset,
    domains: &'a [ValueDomain],
    s: usize,
    c: Option<usize>,
    mutable: Vec<usize>,
    budget: usize,
    seed: u64,
    rng: SeededRng,

    samples: Vec<Vec<i64>>,
    origins: Vec<usize>,
    /// Seeding test rows of the current pair's members.
    origin: (usize, usize),
    seen: HashSet<Vec<i64>>,
    stale: usize,
    exhausted: bool,

    test_rows: HashSet<Vec<i64>>,
    twins: HashMap<Vec<i64>, Vec<usize>>,
    labels: HashMap<Vec<i64>, u8>,
    partners: HashMap<Vec<i64>, Option<(Vec<i64>, bool)>>,

    true_pairs: Vec<Pair>,
    true_keys: HashSet<(Vec<i64>, Vec<i64>)>,
    relaxed_keys: HashSet<(Vec<i64>, Vec<i64>)>,
    invalid: Vec<Pair>,
}

impl<'a> Engine<'a> {
    fn new(
        spec: &'a GeneratorSpec,
        model: &'a dyn Classifier,
        test: &'a Dataset,
        s: usize,
        c: Option<usize>,
        budget: usize,
        seed: u64,
    ) -> Self {
        let domains = test.domains();
        let mutable = (0..test.n_features())
            .filter(|&j| j != s && Some(j) != c && domains[j].len() > 1)
            .collect();
        let test_rows: HashSet<Vec<i64>> = test.rows().map(<[i64]>::to_vec).collect();
        let mut twins: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        if spec.partner_search == PartnerSearch::TestRows {
            for (i, r) in test.rows().enumerate() {
                twins.entry(masked(r, s)).or_default().push(i);
            }
        }
        Engine {
            spec,
            model,
            test,
            domains,
            s,
            c,
            mutable,
            budget,
            seed,
            rng: seed::rng(seed),
            samples: Vec::new(),
            origins: Vec::new(),
            origin: (0, 0),
            seen: HashSet::new(),
            stale: 0,
            exhausted: false,
            test_rows,
            twins,
            labels: HashMap::new(),
            partners: HashMap::new(),
            true_pairs: Vec::new(),
            true_keys: HashSet::new(),
            relaxed_keys: HashSet::new(),
            invalid: Vec::new(),
        }
    }

    fn done(&self) -> bool {
        self.exhausted || self.samples.len() >= self.budget
    }

    fn label(&mut self, x: &[i64]) -> u8 {
        if let Some(&l) = self.labels.get(x) {
            return l;
        }
        let l = self.model.label_of_codes(x);
        self.labels.insert(x.to_vec(), l);
        l
    }

    fn in_test(&self, x: &[i64]) -> bool {
        self.test_rows.contains(x)
    }

    /// Adds `x` to the suite if it is new and the budget allows.
    fn bank(&mut self, x: &[i64], origin: usize) -> bool {
        if self.samples.len() >= self.budget || self.seen.contains(x) {
            return false;
        }
        self.seen.insert(x.to_vec());
        self.samples.push(x.to_vec());
        self.origins.push(origin);
        true
    }

    fn run(&mut self) {
        let n = self.test.n_rows();
        while !self.done() {
            let ia = self.rng.gen_range(0..n);
            let a = self.test.row(ia).to_vec();
            if let Some(c) = self.c {
                // a pair drawn straight from the test data may already be
                // discriminatory under the relaxed definition
                let ib = self.rng.gen_range(0..n);
                let other = self.test.row(ib).to_vec();
                if self.relaxed_form(&a, &other, c) && self.label(&a) != self.label(&other) {
                    self.origin = (ia, ib);
                    self.visit(&a, &other);
                    continue;
                }
            }
            self.origin = (ia, ia);
            let mut b = a.clone();
            b[self.s] = self.domains[self.s].sample_other(a[self.s], &mut self.rng);
            if let Some(c) = self.c {
                b[c] = self.domains[c].sample(&mut self.rng);
            }
            match self.spec.kind {
                GeneratorKind::Random => self.walk_random(a, b),
                GeneratorKind::SgLite => self.walk_sweep(a, b),
                GeneratorKind::AdfLite => self.walk_gradient(a, b),
            }
        }
    }

    fn relaxed_form(&self, a: &[i64], b: &[i64], c: usize) -> bool {
        let mut differs = false;
        for (j, (x, y)) in a.iter().zip(b).enumerate() {
            if x != y {
                if j != self.s && j != c {
                    return false;
                }
                differs = true;
            }
        }
        differs
    }

    /// Banks both members, records the pair if it is discriminatory, and
    /// pairs new perturbed members with true partners. Returns whether the
    /// model labels of the pair differ.
    fn visit(&mut self, a: &[i64], b: &[i64]) -> bool {
        let new_a = self.bank(a, self.origin.0);
        let new_b = self.bank(b, self.origin.1);
        if new_a || new_b {
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.spec.max_attempts_per_pair {
                self.exhausted = true;
            }
        }
        let differs = self.label(a) != self.label(b);
        let pair = Pair {
            a: a.to_vec(),
            b: b.to_vec(),
            a_from_test: self.in_test(a),
            b_from_test: self.in_test(b),
        };
        if differs && self.seen.contains(a) && self.seen.contains(b) {
            self.record(pair.clone());
        }
        if !pair.has_test_member() {
            for (x, new) in [(a, new_a), (b, new_b)] {
                if new {
                    self.pair_with_partner(x);
                }
            }
        }
        differs
    }

    /// Whether a pair counts toward the ledger: with test-row partners only
    /// pairs holding a test member do.
    fn counts(&self, pair: &Pair) -> bool {
        self.spec.partner_search == PartnerSearch::SensitiveVariants || pair.has_test_member()
    }

    fn record(&mut self, pair: Pair) {
        if !self.counts(&pair) {
            return;
        }
        let is_true = super::differing_indices(&pair.a, &pair.b) == [self.s];
        if self.c.is_some() && self.relaxed_keys.insert(pair.key()) && !is_true {
            self.invalid.push(pair.clone());
        }
        if is_true {
            self.add_true(pair);
        }
    }

    fn add_true(&mut self, pair: Pair) {
        if self.true_keys.insert(pair.key()) {
            self.true_pairs.push(pair);
        }
    }

    fn partner(&mut self, x: &[i64]) -> Option<(Vec<i64>, bool)> {
        if let Some(p) = self.partners.get(x) {
            return p.clone();
        }
        let lx = self.label(x);
        let found = match self.spec.partner_search {
            PartnerSearch::TestRows => {
                let rows = self.twins.get(&masked(x, self.s)).cloned().unwrap_or_default();
                let eligible: Vec<usize> = rows
                    .into_iter()
                    .filter(|&i| {
                        let r = self.test.row(i).to_vec();
                        r[self.s] != x[self.s] && self.label(&r) != lx
                    })
                    .collect();
                eligible
                    .choose(&mut self.rng)
                    .map(|&i| (self.test.row(i).to_vec(), true))
            }
            PartnerSearch::SensitiveVariants => {
                let mut values = self.domains[self.s].values();
                values.retain(|&v| v != x[self.s]);
                values.shuffle(&mut self.rng);
                let mut y = x.to_vec();
                let mut hit = None;
                for v in values {
                    y[self.s] = v;
                    if self.label(&y) != lx {
                        hit = Some((y.clone(), self.in_test(&y)));
                        break;
                    }
                }
                hit
            }
        };
        self.partners.insert(x.to_vec(), found.clone());
        found
    }

    fn pair_with_partner(&mut self, x: &[i64]) -> bool {
        match self.partner(x) {
            Some((p, from_test)) => {
                let pair = Pair {
                    a: x.to_vec(),
                    b: p,
                    a_from_test: self.in_test(x),
                    b_from_test: from_test,
                };
                if self.c.is_some() {
                    self.relaxed_keys.insert(pair.key());
                }
                self.add_true(pair);
                true
            }
            None => false,
        }
    }

    fn repair(&mut self) -> PairLedger {
        let mut ledger = PairLedger {
            pairs_with_relaxation: self.relaxed_keys.len() as u64,
            invalid_pairs: self.invalid.len() as u64,
            ..Default::default()
        };
        let invalid = std::mem::take(&mut self.invalid);
        for pair in &invalid {
            let mut fixed = false;
            for x in [&pair.a, &pair.b] {
                if self.pair_with_partner(x) {
                    fixed = true;
                } else {
                    ledger.failed_samples += 1;
                }
            }
            if fixed {
                ledger.repaired_pairs += 1;
            }
        }
        ledger
    }

    fn finish(mut self) -> TestSuite {
        let ledger = if self.c.is_some() {
            self.repair()
        } else {
            PairLedger {
                pairs_without_relaxation: self.true_pairs.len() as u64,
                ..Default::default()
            }
        };
        let members: HashSet<&Vec<i64>> = self.true_pairs.iter().flat_map(|p| [&p.a, &p.b]).collect();
        let idi_samples = self.samples.iter().filter(|x| members.contains(x)).cloned().collect();
        let idi_pairs = self
            .true_pairs
            .iter()
            .filter(|p| self.seen.contains(&p.a) || self.seen.contains(&p.b))
            .cloned()
            .collect();
        let budget_unreachable = self.exhausted && self.samples.len() < self.budget;
        TestSuite {
            unique_samples: self.samples,
            origins: self.origins,
            idi_samples,
            idi_pairs,
            ledger,
            seed: self.seed,
            mode: if self.c.is_some() { Mode::Causal } else { Mode::Base },
            budget_unreachable,
            fallback: false,
        }
    }

    fn set_both(a: &mut [i64], b: &mut [i64], j: usize, v: i64) {
        a[j] = v;
        b[j] = v;
    }

    /// Random walk over single-feature resamples; a discriminatory pair
    /// switches to local refinement around it.
    fn walk_random(&mut self, mut a: Vec<i64>, mut b: Vec<i64>) {
        if self.visit(&a, &b) {
            return self.local_random(a, b);
        }
        for _ in 0..self.spec.global_steps {
            if self.done() || self.mutable.is_empty() {
                return;
            }
            let j = *self.mutable.choose(&mut self.rng).expect("non-empty");
            let v = self.domains[j].sample_other(a[j], &mut self.rng);
            Self::set_both(&mut a, &mut b, j, v);
            if self.visit(&a, &b) {
                return self.local_random(a, b);
            }
        }
    }

    fn local_random(&mut self, mut a: Vec<i64>, mut b: Vec<i64>) {
        for _ in 0..self.spec.local_steps {
            if self.done() || self.mutable.is_empty() {
                return;
            }
            let j = *self.mutable.choose(&mut self.rng).expect("non-empty");
            let v = self.domains[j].sample_other(a[j], &mut self.rng);
            let (mut a2, mut b2) = (a.clone(), b.clone());
            Self::set_both(&mut a2, &mut b2, j, v);
            if self.visit(&a2, &b2) {
                a = a2;
                b = b2;
            }
        }
    }

    /// Systematic sweeps: every single-feature change of the anchor pair,
    /// feature by feature. Discriminatory results become further anchors,
    /// up to `local_steps` of them.
    fn walk_sweep(&mut self, a: Vec<i64>, b: Vec<i64>) {
        let mut queue = vec![(a.clone(), b.clone())];
        let mut anchors = 0;
        self.visit(&a, &b);
        while let Some((a, b)) = queue.pop() {
            let mut order = self.mutable.clone();
            order.shuffle(&mut self.rng);
            for j in order {
                for v in self.domains[j].values() {
                    if self.done() {
                        return;
                    }
                    if v == a[j] {
                        continue;
                    }
                    let (mut a2, mut b2) = (a.clone(), b.clone());
                    Self::set_both(&mut a2, &mut b2, j, v);
                    if self.visit(&a2, &b2) && anchors < self.spec.local_steps {
                        anchors += 1;
                        queue.push((a2, b2));
                    }
                }
            }
        }
    }

    fn gradients(&self, x: &[i64]) -> (f64, Vec<f64>) {
        let v: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        (self.model.probability(&v), self.model.gradient(&v))
    }

    /// Gradient-guided search: global steps push the pair's predictions
    /// apart until they disagree, then local steps move along the features
    /// the prediction is least sensitive to.
    fn walk_gradient(&mut self, mut a: Vec<i64>, mut b: Vec<i64>) {
        if self.visit(&a, &b) {
            return self.local_gradient(a, b);
        }
        for _ in 0..self.spec.global_steps {
            if self.done() || self.mutable.is_empty() {
                return;
            }
            let (pa, ga) = self.gradients(&a);
            let (pb, gb) = self.gradients(&b);
            let toward = if pa >= pb { 1.0 } else { -1.0 };
            let mut moved = false;
            for &j in &self.mutable.clone() {
                let d = toward * (ga[j] - gb[j]);
                let dir = if d > 0.0 {
                    1
                } else if d < 0.0 {
                    -1
                } else if self.rng.gen_bool(0.5) {
                    1
                } else {
                    -1
                };
                let v = self.domains[j].shift(a[j], dir * self.spec.step_size);
                moved |= v != a[j];
                Self::set_both(&mut a, &mut b, j, v);
            }
            if !moved {
                // stuck against the domain ends: restart from a random change
                let j = *self.mutable.choose(&mut self.rng).expect("non-empty");
                let v = self.domains[j].sample_other(a[j], &mut self.rng);
                Self::set_both(&mut a, &mut b, j, v);
            }
            if self.visit(&a, &b) {
                return self.local_gradient(a, b);
            }
        }
    }

    fn local_gradient(&mut self, mut a: Vec<i64>, mut b: Vec<i64>) {
        for _ in 0..self.spec.local_steps {
            if self.done() || self.mutable.is_empty() {
                return;
            }
            let (_, ga) = self.gradients(&a);
            let (_, gb) = self.gradients(&b);
            let weights: Vec<f64> = self
                .mutable
                .iter()
                .map(|&j| 1.0 / (ga[j].abs() + gb[j].abs() + 1e-8))
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick = self.rng.gen_range(0.0..total);
            let mut j = *self.mutable.last().expect("non-empty");
            for (k, w) in weights.iter().enumerate() {
                if pick < *w {
                    j = self.mutable[k];
                    break;
                }
                pick -= w;
            }
            let dir = if self.rng.gen_bool(0.5) { 1 } else { -1 };
            let v = self.domains[j].shift(a[j], dir * self.spec.step_size);
            let (mut a2, mut b2) = (a.clone(), b.clone());
            Self::set_both(&mut a2, &mut b2, j, v);
            if self.visit(&a2, &b2) {
                a = a2;
                b = b2;
            }
        }
    }
}
