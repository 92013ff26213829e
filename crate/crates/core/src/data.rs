//! Tabular data: schema, label-encoded datasets, value domains and splits.
//!
//! All features are discrete. Categorical columns are label-encoded with
//! codes assigned in order of first appearance in the file; integer columns
//! are kept as-is. Value domains are computed once from the loaded data and
//! carried unchanged into every subset derived from it, so perturbation stays
//! inside the ranges observed before splitting.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file has no header row")]
    MissingHeader,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("label column contains non-binary value {value:?} (row {row})")]
    NonBinaryLabel { row: usize, value: String },
    #[error("dataset has no rows")]
    EmptyData,
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("column {column:?} row {row}: {value:?} is not an integer")]
    InvalidValue { row: usize, column: String, value: String },
    #[error("train fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("row width {got} does not match feature count {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("value {value} of feature {feature:?} lies outside its domain")]
    OutOfDomain { feature: String, value: i64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub kind: FeatureKind,
}

/// Column layout of a dataset: ordered features, the protected subset and
/// the binary label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureDecl>,
    #[serde(default)]
    pub sensitive: Vec<String>,
    pub label: String,
}

impl Schema {
    pub fn new(features: Vec<FeatureDecl>, sensitive: Vec<String>, label: impl Into<String>) -> Result<Self> {
        let schema = Schema {
            features,
            sensitive,
            label: label.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(DataError::InvalidSchema("no features declared".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate feature {:?}", f.name)));
            }
        }
        if seen.contains(self.label.as_str()) {
            return Err(DataError::InvalidSchema(format!(
                "label {:?} is also declared as a feature",
                self.label
            )));
        }
        for s in &self.sensitive {
            if !seen.contains(s.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "sensitive feature {s:?} is not declared"
                )));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| DataError::UnknownFeature(name.to_string()))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.features[index].name
    }
}

/// Legal values of one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueDomain {
    /// Every integer in `lo..=hi`.
    Range { lo: i64, hi: i64 },
    /// An explicit, sorted, duplicate-free code set.
    Set(Vec<i64>),
}

impl ValueDomain {
    pub fn range(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        ValueDomain::Range { lo, hi }
    }

    pub fn set(mut values: Vec<i64>) -> Self {
        values.sort_unstable();
        values.dedup();
        assert!(!values.is_empty(), "empty code set");
        ValueDomain::Set(values)
    }

    pub fn len(&self) -> usize {
        match self {
            ValueDomain::Range { lo, hi } => (hi - lo + 1) as usize,
            ValueDomain::Set(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_singleton(&self) -> bool {
        self.len() == 1
    }

    pub fn contains(&self, value: i64) -> bool {
        match self {
            ValueDomain::Range { lo, hi } => (*lo..=*hi).contains(&value),
            ValueDomain::Set(v) => v.binary_search(&value).is_ok(),
        }
    }

    pub fn min(&self) -> i64 {
        match self {
            ValueDomain::Range { lo, .. } => *lo,
            ValueDomain::Set(v) => v[0],
        }
    }

    pub fn max(&self) -> i64 {
        match self {
            ValueDomain::Range { hi, .. } => *hi,
            ValueDomain::Set(v) => v[v.len() - 1],
        }
    }

    /// The `i`-th value in ascending order.
    pub fn nth(&self, i: usize) -> i64 {
        match self {
            ValueDomain::Range { lo, .. } => lo + i as i64,
            ValueDomain::Set(v) => v[i],
        }
    }

    /// Position of `value` in ascending order, or of the closest value.
    pub fn position(&self, value: i64) -> usize {
        match self {
            ValueDomain::Range { lo, hi } => (value.clamp(*lo, *hi) - lo) as usize,
            ValueDomain::Set(v) => match v.binary_search(&value) {
                Ok(i) => i,
                Err(0) => 0,
                Err(i) if i == v.len() => v.len() - 1,
                Err(i) => {
                    if value - v[i - 1] <= v[i] - value {
                        i - 1
                    } else {
                        i
                    }
                }
            },
        }
    }

    pub fn values(&self) -> Vec<i64> {
        (0..self.len()).map(|i| self.nth(i)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.nth(rng.gen_range(0..self.len()))
    }

    /// Uniform draw that differs from `current` unless the domain is a
    /// singleton.
    pub fn sample_other<R: Rng + ?Sized>(&self, current: i64, rng: &mut R) -> i64 {
        let n = self.len();
        if n == 1 {
            return self.nth(0);
        }
        if !self.contains(current) {
            return self.sample(rng);
        }
        let skip = self.position(current);
        let i = rng.gen_range(0..n - 1);
        self.nth(if i >= skip { i + 1 } else { i })
    }

    /// Moves `value` by `steps` positions in ascending order, clamped to the
    /// domain ends.
    pub fn shift(&self, value: i64, steps: i64) -> i64 {
        let pos = self.position(value) as i64 + steps;
        self.nth(pos.clamp(0, self.len() as i64 - 1) as usize)
    }

    fn observed(kind: FeatureKind, column: impl Iterator<Item = i64>) -> Option<Self> {
        match kind {
            FeatureKind::Integer => {
                let (lo, hi) = column.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (lo <= hi).then(|| ValueDomain::range(lo, hi))
            }
            FeatureKind::Categorical => {
                let v: Vec<i64> = column.collect();
                (!v.is_empty()).then(|| ValueDomain::set(v))
            }
        }
    }
}

impl fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDomain::Range { lo, hi } => write!(f, "[{lo}, {hi}]"),
            ValueDomain::Set(v) => {
                write!(f, "{{")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Label-encoded rows with a binary label.
///
/// Subsets created by [`Dataset::subset`] or [`split_train_test`] share the
/// schema, decode maps and frozen domains of their parent.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    cells: Vec<i64>,
    labels: Vec<u8>,
    domains: Arc<Vec<ValueDomain>>,
    decode: Arc<Vec<Option<Vec<String>>>>,
}

impl Dataset {
    /// Builds a dataset from already-encoded rows. Domains are computed from
    /// the rows; categorical decode maps are the codes' decimal strings.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<i64>>, labels: Vec<u8>) -> Result<Self> {
        schema.validate()?;
        if rows.is_empty() {
            return Err(DataError::EmptyData);
        }
        let n = schema.n_features();
        let mut cells = Vec::with_capacity(rows.len() * n);
        for r in &rows {
            if r.len() != n {
                return Err(DataError::WidthMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
            cells.extend_from_slice(r);
        }
        if rows.len() != labels.len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some((row, l)) = labels.iter().enumerate().find(|(_, l)| **l > 1) {
            return Err(DataError::NonBinaryLabel {
                row,
                value: l.to_string(),
            });
        }
        let domains = compute_domains(&schema, &cells);
        let decode = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| match f.kind {
                FeatureKind::Categorical => {
                    let max = domains[j].max().max(0) as usize;
                    Some((0..=max).map(|c| c.to_string()).collect())
                }
                FeatureKind::Integer => None,
            })
            .collect();
        Ok(Dataset {
            schema: Arc::new(schema),
            cells,
            labels,
            domains: Arc::new(domains),
            decode: Arc::new(decode),
        })
    }

    /// Replaces the frozen domains, e.g. to widen them beyond the observed
    /// values of a small fixture. Every cell must lie in its new domain.
    pub fn with_domains(mut self, domains: Vec<ValueDomain>) -> Result<Self> {
        if domains.len() != self.n_features() {
            return Err(DataError::WidthMismatch {
                expected: self.n_features(),
                got: domains.len(),
            });
        }
        for i in 0..self.n_rows() {
            for (j, d) in domains.iter().enumerate() {
                let v = self.row(i)[j];
                if !d.contains(v) {
                    return Err(DataError::OutOfDomain {
                        feature: self.schema.name(j).to_string(),
                        value: v,
                    });
                }
            }
        }
        self.domains = Arc::new(domains);
        Ok(self)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[i64] {
        let n = self.n_features();
        &self.cells[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i64]> {
        self.cells.chunks_exact(self.n_features().max(1))
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = i64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Frozen per-feature domains.
    pub fn domains(&self) -> &[ValueDomain] {
        &self.domains
    }

    pub fn domain(&self, j: usize) -> &ValueDomain {
        &self.domains[j]
    }

    /// Domain recomputed from this dataset's rows only.
    pub fn observed_domain(&self, j: usize) -> Option<ValueDomain> {
        ValueDomain::observed(self.schema.features[j].kind, self.column(j))
    }

    pub fn require_rows(&self) -> Result<()> {
        if self.is_empty() {
            Err(DataError::EmptyData)
        } else {
            Ok(())
        }
    }

    /// Original string for a categorical code, or the integer itself.
    pub fn decode(&self, j: usize, code: i64) -> Option<String> {
        match &self.decode[j] {
            Some(map) => usize::try_from(code).ok().and_then(|c| map.get(c)).cloned(),
            None => Some(code.to_string()),
        }
    }

    /// Inverse of [`Dataset::decode`].
    pub fn encode(&self, j: usize, raw: &str) -> Option<i64> {
        match &self.decode[j] {
            Some(map) => map.iter().position(|s| s == raw).map(|c| c as i64),
            None => raw.trim().parse().ok(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.n_features();
        let mut cells = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            cells.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            schema: Arc::clone(&self.schema),
            cells,
            labels,
            domains: Arc::clone(&self.domains),
            decode: Arc::clone(&self.decode),
        }
    }

    /// Appends rows, keeping schema and domains. Rows must respect the
    /// frozen domains.
    pub fn extended(&self, rows: &[(Vec<i64>, u8)]) -> Result<Dataset> {
        let mut out = self.clone();
        for (r, l) in rows {
            if r.len() != self.n_features() {
                return Err(DataError::WidthMismatch {
                    expected: self.n_features(),
                    got: r.len(),
                });
            }
            if *l > 1 {
                return Err(DataError::NonBinaryLabel {
                    row: out.n_rows(),
                    value: l.to_string(),
                });
            }
            for (j, v) in r.iter().enumerate() {
                if !self.domains[j].contains(*v) {
                    return Err(DataError::OutOfDomain {
                        feature: self.schema.name(j).to_string(),
                        value: *v,
                    });
                }
            }
            out.cells.extend_from_slice(r);
            out.labels.push(*l);
        }
        Ok(out)
    }

    /// Row index lookup keyed on the full encoded vector.
    pub fn row_index(&self) -> HashMap<Vec<i64>, Vec<usize>> {
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, r) in self.rows().enumerate() {
            map.entry(r.to_vec()).or_default().push(i);
        }
        map
    }

    /// Rows as `f64`, optionally followed by the label as the last column.
    pub fn to_matrix(&self, with_label: bool) -> ndarray::Array2<f64> {
        let n = self.n_features();
        let width = n + usize::from(with_label);
        ndarray::Array2::from_shape_fn((self.n_rows(), width), |(i, j)| {
            if j < n {
                self.row(i)[j] as f64
            } else {
                f64::from(self.labels[i])
            }
        })
    }
}

fn compute_domains(schema: &Schema, cells: &[i64]) -> Vec<ValueDomain> {
    let n = schema.n_features();
    schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            ValueDomain::observed(f.kind, cells.chunks_exact(n).map(|r| r[j]))
                .expect("domains are computed from non-empty data")
        })
        .collect()
}

/// Reads a comma-separated file with a header row. Columns may appear in any
/// order; every schema column must be present and no others. Rows with an
/// empty cell are dropped.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(DataError::MissingHeader),
    };
    if header.iter().all(|h| h.trim().is_empty()) {
        return Err(DataError::MissingHeader);
    }
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();

    let mut positions = Vec::with_capacity(schema.n_features());
    for f in &schema.features {
        let p = header
            .iter()
            .position(|h| *h == f.name)
            .ok_or_else(|| DataError::SchemaMismatch(format!("column {:?} is missing", f.name)))?;
        positions.push(p);
    }
    let label_pos = header
        .iter()
        .position(|h| *h == schema.label)
        .ok_or_else(|| DataError::SchemaMismatch(format!("label column {:?} is missing", schema.label)))?;
    for h in &header {
        if *h != schema.label && !schema.features.iter().any(|f| f.name == *h) {
            return Err(DataError::SchemaMismatch(format!("undeclared column {h:?}")));
        }
    }

    let n = schema.n_features();
    let mut codebooks: Vec<HashMap<String, i64>> = vec![HashMap::new(); n];
    let mut decode: Vec<Option<Vec<String>>> = schema
        .features
        .iter()
        .map(|f| (f.kind == FeatureKind::Categorical).then(Vec::new))
        .collect();
    let mut cells = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0usize;

    for (line, rec) in records.enumerate() {
        let rec = rec?;
        let row = line + 1;
        if rec.len() != header.len() {
            return Err(DataError::SchemaMismatch(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        if rec.iter().any(|c| c.trim().is_empty()) {
            dropped += 1;
            continue;
        }
        let raw_label = rec[label_pos].trim();
        let label = match raw_label {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(DataError::NonBinaryLabel {
                    row,
                    value: other.to_string(),
                })
            }
        };
        for (j, f) in schema.features.iter().enumerate() {
            let raw = rec[positions[j]].trim();
            let code = match f.kind {
                FeatureKind::Integer => raw.parse::<i64>().map_err(|_| DataError::InvalidValue {
                    row,
                    column: f.name.clone(),
                    value: raw.to_string(),
                })?,
                FeatureKind::Categorical => {
                    let book = &mut codebooks[j];
                    match book.get(raw) {
                        Some(c) => *c,
                        None => {
                            let c = book.len() as i64;
                            book.insert(raw.to_string(), c);
                            decode[j].as_mut().expect("categorical").push(raw.to_string());
                            c
                        }
                    }
                }
            };
            cells.push(code);
        }
        labels.push(label);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with empty cells");
    }
    if labels.is_empty() {
        return Err(DataError::EmptyData);
    }
    let domains = compute_domains(schema, &cells);
    Ok(Dataset {
        schema: Arc::new(schema.clone()),
        cells,
        labels,
        domains: Arc::new(domains),
        decode: Arc::new(decode),
    })
}

/// Frozen domain of a named feature: the observed `[min, max]` for integer
/// features, the observed code set for categorical ones.
pub fn feature_domain(dataset: &Dataset, feature: &str) -> Result<ValueDomain> {
    let j = dataset.schema().index_of(feature)?;
    Ok(dataset.domain(j).clone())
}

/// Seeded shuffle-and-cut split. The first `round(fraction * n)` shuffled
/// rows become the training set.
pub fn split_train_test(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let n = dataset.n_rows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let cut = ((train_fraction * n as f64).round() as usize).min(n);
    let (train, test) = idx.split_at(cut);
    Ok((dataset.subset(train), dataset.subset(test)))
}

/// Indices of a seeded sample of `fraction` of the rows, without replacement.
pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let keep = ((fraction * n as f64).round() as usize).clamp(usize::from(n > 0), n);
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}
