//! Models under test: logistic regression and a fully connected ReLU
//! network with a sigmoid output, trained with Adam on binary cross-entropy.
//!
//! Integer-coded features are consumed as raw reals. Each model carries a
//! per-feature standardisation fitted on its training data, so callers never
//! rescale inputs themselves, and [`Classifier::gradient`] is taken with
//! respect to the raw inputs.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::seed;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data is empty")]
    EmptyData,
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
    #[error("sample width {got} does not match model input width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Anything the generators can query: probability of the positive class and
/// its gradient with respect to the (real-relaxed) input.
///
/// Implementations may assume `x.len() == self.input_width()`; the checked
/// entry points are [`predict`] and [`input_gradient`].
pub trait Classifier: Sync {
    fn input_width(&self) -> usize;

    fn probability(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn label_of(&self, x: &[f64]) -> u8 {
        u8::from(self.probability(x) >= 0.5)
    }

    /// Label of an integer-coded sample.
    fn label_of_codes(&self, x: &[i64]) -> u8 {
        let v: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        self.label_of(&v)
    }
}

fn check_width(model: &dyn Classifier, got: usize) -> Result<(), ModelError> {
    if got != model.input_width() {
        return Err(ModelError::WidthMismatch {
            expected: model.input_width(),
            got,
        });
    }
    Ok(())
}

/// Label (threshold 0.5, inclusive) and probability for one sample.
pub fn predict(model: &dyn Classifier, sample: &[f64]) -> Result<(u8, f64), ModelError> {
    check_width(model, sample.len())?;
    let p = model.probability(sample);
    Ok((u8::from(p >= 0.5), p))
}

/// Analytic gradient of the predicted probability w.r.t. each input.
pub fn input_gradient(model: &dyn Classifier, sample: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_width(model, sample.len())?;
    Ok(model.gradient(sample))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_sizes: Vec<usize>,
    /// Dropout rates for the leading hidden layers.
    pub dropout: Vec<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub early_stop_patience: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::logistic()
    }
}

impl ModelConfig {
    pub fn logistic() -> Self {
        ModelConfig {
            kind: ModelKind::Logistic,
            hidden_sizes: Vec::new(),
            dropout: Vec::new(),
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 20,
            l2: 1e-4,
            seed: 0,
            early_stop_patience: None,
        }
    }

    /// Five hidden layers of 256, 256, 128, 64 and 32 units with dropout
    /// after the first three.
    pub fn dnn5() -> Self {
        ModelConfig {
            kind: ModelKind::Mlp,
            hidden_sizes: vec![256, 256, 128, 64, 32],
            dropout: vec![0.3, 0.3, 0.2],
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 100,
            l2: 1e-4,
            seed: 0,
            early_stop_patience: None,
        }
    }

    /// Five hidden layers of equal `width`, early stopping with patience 10.
    pub fn dnn6(width: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Mlp,
            hidden_sizes: vec![width; 5],
            dropout: Vec::new(),
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 100,
            l2: 0.0,
            seed: 0,
            early_stop_patience: Some(10),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::ConfigInvalid(m.to_string()));
        match self.kind {
            ModelKind::Mlp if self.hidden_sizes.is_empty() => return bad("mlp needs at least one hidden layer"),
            ModelKind::Logistic if !self.hidden_sizes.is_empty() => return bad("logistic model has no hidden layers"),
            _ => {}
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        if self.dropout.len() > self.hidden_sizes.len() {
            return bad("more dropout rates than hidden layers");
        }
        if self.dropout.iter().any(|d| !(0.0..1.0).contains(d)) {
            return bad("dropout rates must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.early_stop_patience == Some(0) {
            return bad("early stopping patience must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `out x in`
    w: Array2<f64>,
    b: Array1<f64>,
}

/// A trained model. Logistic regression is the zero-hidden-layer case.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    mean: Array1<f64>,
    scale: Array1<f64>,
    layers: Vec<Dense>,
}

impl Model {
    /// Logistic model with the given raw-input weights and no
    /// standardisation.
    pub fn logistic_from_weights(weights: Vec<f64>, bias: f64) -> Self {
        let n = weights.len();
        Model {
            config: ModelConfig::logistic(),
            mean: Array1::zeros(n),
            scale: Array1::ones(n),
            layers: vec![Dense {
                w: Array2::from_shape_vec((1, n), weights).expect("1 x n"),
                b: Array1::from_elem(1, bias),
            }],
        }
    }

    /// Untrained network with Xavier-initialised weights (zeros for the
    /// logistic kind) and identity standardisation.
    pub fn initialise(config: &ModelConfig, input_width: usize) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seed::rng(config.seed);
        let mut sizes = vec![input_width];
        sizes.extend_from_slice(&config.hidden_sizes);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let wmat = match config.kind {
                    ModelKind::Logistic => Array2::zeros((fan_out, fan_in)),
                    ModelKind::Mlp => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-limit..limit))
                    }
                };
                Dense {
                    w: wmat,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Model {
            config: config.clone(),
            mean: Array1::zeros(input_width),
            scale: Array1::ones(input_width),
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Flattened parameters, for equality checks in tests.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.mean.iter().chain(self.scale.iter()).copied().collect();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    fn standardise(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (&x - &self.mean) / &self.scale
    }

    /// Batch probabilities for a standardised input matrix (rows = samples),
    /// returning every layer's pre-activation and activation for backprop.
    fn forward_batch(&self, x: &Array2<f64>, masks: Option<&[Array2<f64>]>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut acts = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = acts[k].dot(&layer.w.t()) + &layer.b;
            let a = if k == last {
                z.mapv(sigmoid)
            } else {
                let mut a = z.mapv(|v| v.max(0.0));
                if let Some(m) = masks.and_then(|m| m.get(k)) {
                    a *= m;
                }
                a
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    fn probabilities(&self, x_std: &Array2<f64>) -> Array1<f64> {
        let (_, acts) = self.forward_batch(x_std, None);
        acts.last().expect("output").column(0).to_owned()
    }

    /// Probabilities for raw integer-coded rows of a dataset.
    pub fn predict_dataset(&self, data: &Dataset) -> Vec<f64> {
        if data.is_empty() {
            return Vec::new();
        }
        let x = data.to_matrix(false);
        let xs = (&x - &self.mean) / &self.scale;
        self.probabilities(&xs).to_vec()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            config: self.config.clone(),
            mean: self.mean.to_vec(),
            scale: self.scale.to_vec(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.w.nrows(),
                    cols: l.w.ncols(),
                    weights: l.w.iter().copied().collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_FILE_VERSION {
            return Err(ModelError::UnsupportedVersion(file.version));
        }
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                Ok(Dense {
                    w: Array2::from_shape_vec((l.rows, l.cols), l.weights)
                        .map_err(|e| ModelError::ConfigInvalid(e.to_string()))?,
                    b: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        if layers.is_empty() || file.mean.len() != file.scale.len() || layers[0].w.ncols() != file.mean.len() {
            return Err(ModelError::ConfigInvalid("inconsistent layer shapes".into()));
        }
        Ok(Model {
            config: file.config,
            mean: Array1::from(file.mean),
            scale: Array1::from(file.scale),
            layers,
        })
    }
}

impl Classifier for Model {
    fn input_width(&self) -> usize {
        self.mean.len()
    }

    fn probability(&self, x: &[f64]) -> f64 {
        let mut a = self.standardise(ArrayView1::from(x));
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.w.dot(&a) + &layer.b;
            a = if k == last {
                z.mapv(sigmoid)
            } else {
                z.mapv(|v| v.max(0.0))
            };
        }
        a[0]
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let xs = self.standardise(ArrayView1::from(x));
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = xs;
        for layer in &self.layers {
            let z = layer.w.dot(&a) + &layer.b;
            a = z.mapv(|v| v.max(0.0));
            pre.push(z);
        }
        let p = sigmoid(pre.last().expect("output")[0]);
        // dp/dz at the output, then back through the ReLU layers
        let mut delta = Array1::from_elem(1, p * (1.0 - p));
        for k in (0..self.layers.len()).rev() {
            let upstream = self.layers[k].w.t().dot(&delta);
            if k == 0 {
                delta = upstream;
            } else {
                delta = upstream * pre[k - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            }
        }
        (delta / &self.scale).to_vec()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: ModelConfig,
    mean: Vec<f64>,
    scale: Vec<f64>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

struct Adam {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(layers: &[Dense]) -> Self {
        let zeros = || {
            layers
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (k, layer) in layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[k];
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            update(&mut layer.w, gw, mw, vw, lr, c1, c2);
            update(&mut layer.b, gb, mb, vb, lr, c1, c2);
        }
    }
}

fn update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = Adam::BETA1 * *m + (1.0 - Adam::BETA1) * g;
        *v = Adam::BETA2 * *v + (1.0 - Adam::BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Adam::EPS);
    });
}

fn bce(p: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let eps = 1e-12;
    let total: f64 = p
        .iter()
        .zip(y.iter())
        .map(|(&p, &y)| -(y * p.clamp(eps, 1.0 - eps).ln() + (1.0 - y) * (1.0 - p).clamp(eps, 1.0 - eps).ln()))
        .sum();
    total / p.len().max(1) as f64
}

/// Trains a fresh model on `data`. Deterministic for a fixed config seed.
pub fn train(data: &Dataset, config: &ModelConfig) -> Result<Model, ModelError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let width = data.n_features();
    let mut model = Model::initialise(config, width)?;
    let mut rng = seed::rng(seed::mix(config.seed ^ 0x7452_4149_4e00));

    let x_raw = data.to_matrix(false);
    let mean = x_raw.mean_axis(Axis(0)).expect("non-empty");
    let scale = x_raw.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let x = (&x_raw - &mean) / &scale;
    let y = Array1::from_iter(data.labels().iter().map(|&l| f64::from(l)));
    model.mean = mean;
    model.scale = scale;

    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let (train_idx, val_idx) = match config.early_stop_patience {
        Some(_) if data.n_rows() >= 10 => {
            order.shuffle(&mut rng);
            let n_val = (data.n_rows() / 10).max(1);
            let val = order[..n_val].to_vec();
            (order[n_val..].to_vec(), val)
        }
        _ => (order, Vec::new()),
    };
    let x_val = x.select(Axis(0), &val_idx);
    let y_val = y.select(Axis(0), &val_idx);

    let mut adam = Adam::new(&model.layers);
    let mut best = (f64::INFINITY, model.layers.clone());
    let mut stale = 0usize;
    let mut idx = train_idx;
    for _epoch in 0..config.epochs {
        idx.shuffle(&mut rng);
        for batch in idx.chunks(config.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let masks = dropout_masks(&model, config, batch.len(), &mut rng);
            let grads = backward(&model, &xb, &yb, masks.as_deref(), config.l2);
            adam.step(&mut model.layers, &grads, config.learning_rate);
        }
        if let Some(patience) = config.early_stop_patience {
            if val_idx.is_empty() {
                continue;
            }
            let loss = bce(&model.probabilities(&x_val), &y_val);
            if loss < best.0 {
                best = (loss, model.layers.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    if config.early_stop_patience.is_some() && best.0.is_finite() {
        model.layers = best.1;
    }
    Ok(model)
}

fn dropout_masks<R: Rng>(model: &Model, config: &ModelConfig, rows: usize, rng: &mut R) -> Option<Vec<Array2<f64>>> {
    if config.dropout.iter().all(|&d| d == 0.0) {
        return None;
    }
    Some(
        config
            .dropout
            .iter()
            .enumerate()
            .map(|(k, &rate)| {
                let width = model.layers[k].w.nrows();
                let keep = 1.0 - rate;
                Array2::from_shape_simple_fn((rows, width), || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            })
            .collect(),
    )
}

/// Mean binary cross-entropy gradients for one batch, plus `l2 * w` on the
/// weight matrices.
fn backward(
    model: &Model,
    x: &Array2<f64>,
    y: &Array1<f64>,
    masks: Option<&[Array2<f64>]>,
    l2: f64,
) -> Vec<(Array2<f64>, Array1<f64>)> {
    let (pre, acts) = model.forward_batch(x, masks);
    let n = x.nrows() as f64;
    let p = acts.last().expect("output").column(0).to_owned();
    // d(BCE)/dz for a sigmoid output is p - y
    let mut delta = (p - y).insert_axis(Axis(1)) / n;
    let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); model.layers.len()];
    for k in (0..model.layers.len()).rev() {
        let gw = delta.t().dot(&acts[k]) + &(&model.layers[k].w * l2);
        let gb = delta.sum_axis(Axis(0));
        if k > 0 {
            let mut upstream = delta.dot(&model.layers[k].w);
            upstream *= &pre[k - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            if let Some(m) = masks.and_then(|m| m.get(k - 1)) {
                upstream *= m;
            }
            delta = upstream;
        }
        grads[k] = (gw, gb);
    }
    grads
}
