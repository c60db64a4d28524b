//! Binary MLP probe over concatenated `[u; w]` embedding pairs.
//!
//! Architecture: `2*dim -> hidden^(layers-1) -> 1` with ReLU between affine
//! layers and a sigmoid on the output. Loss is binary cross-entropy computed
//! from the logit; optimisation is Adam over seeded-shuffled mini-batches.
//! Storage is 32-bit; all arithmetic is 64-bit.
//!
//! Parameters live in one flat vector. For layer `l` the weights are an
//! `out x in` row-major block followed by `out` biases.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::binfmt::{EnvelopeReader, EnvelopeWriter};
use crate::embedding_store::EmbeddingTable;
use crate::error::{Error, Result};
use crate::probe_dataset::{ProbeDataset, ProbePair, Split};
use crate::rng::{stream, Purpose};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const INIT_STD: f64 = 0.02;
/// Accuracy spread across layer counts above which a warning is logged.
pub const LAYER_SPREAD_WARNING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden_dim: 256,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(1..=5).contains(&self.layers) {
            return bad("layers must be in 1..=5");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    fn end(&self) -> usize {
        self.offset + (self.inputs + 1) * self.outputs
    }
}

fn layout(embed_dim: usize, config: &ProbeConfig) -> Vec<LayerShape> {
    let mut shapes = Vec::with_capacity(config.layers);
    let mut inputs = 2 * embed_dim;
    let mut offset = 0;
    for l in 0..config.layers {
        let outputs = if l + 1 == config.layers { 1 } else { config.hidden_dim };
        let shape = LayerShape {
            inputs,
            outputs,
            offset,
        };
        offset = shape.end();
        inputs = outputs;
        shapes.push(shape);
    }
    shapes
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln s(z) + (1-y) ln(1-s(z))]` evaluated without forming `s(z)`.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    config: ProbeConfig,
    embed_dim: usize,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    step: u64,
}

impl ProbeModel {
    /// Gaussian(0, 0.02) weights and zero biases from the init stream of `config.seed`.
    pub fn new(config: ProbeConfig, embed_dim: usize) -> Result<Self> {
        Self::with_init_std(config, embed_dim, INIT_STD)
    }

    pub fn with_init_std(config: ProbeConfig, embed_dim: usize, std: f64) -> Result<Self> {
        let mut model = Self::zeros(config, embed_dim)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut rng = stream(config.seed, Purpose::ProbeInit, 0);
        for shape in &model.shapes {
            for w in &mut model.params[shape.weights()] {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn zeros(config: ProbeConfig, embed_dim: usize) -> Result<Self> {
        config.validate()?;
        if embed_dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        let shapes = layout(embed_dim, &config);
        let n = shapes.last().expect("at least one layer").end();
        Ok(Self {
            config,
            embed_dim,
            shapes,
            params: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        })
    }

    pub fn config(&self) -> &ProbeConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Parameter index range of the weight block of `layer`.
    pub fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        self.shapes[layer].weights()
    }

    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        self.shapes[layer].biases()
    }

    /// Concatenates two embeddings into the 64-bit model input.
    pub fn input(&self, u: &[f32], w: &[f32]) -> Result<Vec<f64>> {
        for v in [u, w] {
            if v.len() != self.embed_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.embed_dim,
                    actual: v.len(),
                });
            }
        }
        Ok(u.iter().chain(w).map(|x| f64::from(*x)).collect())
    }

    pub fn forward(&self, u: &[f32], w: &[f32]) -> Result<f64> {
        let x = self.input(u, w)?;
        Ok(sigmoid(self.logit(&x)))
    }

    /// Output logit for a prepared input of length `2*dim`.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let acts = self.activations(x);
        acts.last().expect("output")[0]
    }

    /// Per-layer outputs: ReLU for hidden layers, the raw logit for the last.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.shapes.len());
        for (l, shape) in self.shapes.iter().enumerate() {
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let w = &self.params[shape.weights()];
            let b = &self.params[shape.biases()];
            let last = l + 1 == self.shapes.len();
            let out: Vec<f64> = (0..shape.outputs)
                .map(|o| {
                    let row = &w[o * shape.inputs..(o + 1) * shape.inputs];
                    let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Loss of one example times `scale`.
    pub fn loss(&self, x: &[f64], label: f64, scale: f64) -> f64 {
        scale * bce_from_logit(self.logit(x), label)
    }

    /// Adds `scale * dLoss/dparams` for one example into `grad` and returns the scaled loss.
    pub fn accumulate_gradient(&self, x: &[f64], label: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let acts = self.activations(x);
        let z = acts.last().expect("output")[0];
        let mut delta = vec![scale * (sigmoid(z) - label)];
        for l in (0..self.shapes.len()).rev() {
            let shape = self.shapes[l];
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let wr = shape.weights();
            let br = shape.biases();
            for o in 0..shape.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[br.start + o] += d;
                let row = &mut grad[wr.start + o * shape.inputs..wr.start + (o + 1) * shape.inputs];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let w = &self.params[wr];
                let mut prev = vec![0.0; shape.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * shape.inputs..(o + 1) * shape.inputs];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
                // ReLU derivative: zero where the activation was clipped.
                for (p, a) in prev.iter_mut().zip(&acts[l - 1]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        scale * bce_from_logit(z, label)
    }

    /// Analytic gradient of the scaled single-example loss.
    pub fn gradient(&self, x: &[f64], label: f64, scale: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_gradient(x, label, scale, &mut grad);
        grad
    }

    fn adam_update(&mut self, grad: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let lr = self.config.learning_rate;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (i, &g) in grad.iter().enumerate() {
            self.adam_m[i] = ADAM_BETA1 * self.adam_m[i] + (1.0 - ADAM_BETA1) * g;
            self.adam_v[i] = ADAM_BETA2 * self.adam_v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.adam_m[i] / c1;
            let v_hat = self.adam_v[i] / c2;
            self.params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = EnvelopeWriter::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        let c = &self.config;
        w.u32(c.layers as u32);
        w.u32(c.hidden_dim as u32);
        w.f64(c.learning_rate);
        w.u32(c.epochs as u32);
        w.u32(c.batch_size as u32);
        w.u64(c.seed);
        w.u32(self.embed_dim as u32);
        w.u64(self.step);
        w.u64(self.params.len() as u64);
        for block in [&self.params, &self.adam_m, &self.adam_v] {
            for v in block.iter() {
                w.f64(*v);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = EnvelopeReader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "probe checkpoint")?;
        let config = ProbeConfig {
            layers: r.u32()? as usize,
            hidden_dim: r.u32()? as usize,
            learning_rate: r.f64()?,
            epochs: r.u32()? as usize,
            batch_size: r.u32()? as usize,
            seed: r.u64()?,
        };
        let embed_dim = r.u32()? as usize;
        let step = r.u64()?;
        let n = r.u64()? as usize;
        let mut model = Self::zeros(config, embed_dim)?;
        if n != model.params.len() {
            return Err(r.error(format!(
                "parameter count {n} does not match configuration ({})",
                model.params.len()
            )));
        }
        for block in [&mut model.params, &mut model.adam_m, &mut model.adam_v] {
            for v in block.iter_mut() {
                *v = r.f64()?;
                if !v.is_finite() {
                    return Err(r.error("non-finite parameter"));
                }
            }
        }
        r.finish()?;
        model.step = step;
        Ok(model)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CMLP";
const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint(model: &ProbeModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ProbeModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ProbeModel::from_bytes(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config: ProbeConfig,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub epochs: Vec<EpochStats>,
    pub final_accuracy: Option<f64>,
    /// Excluded from serialised reports so they stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

fn missing_characters(dataset: &ProbeDataset, table: &EmbeddingTable) -> Result<()> {
    let missing: Vec<char> = dataset.characters().into_iter().filter(|c| !table.contains(*c)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingEmbeddings(missing))
    }
}

fn prepare<'a, I>(model: &ProbeModel, pairs: I, table: &EmbeddingTable) -> Result<Vec<(Vec<f64>, f64)>>
where
    I: IntoIterator<Item = &'a ProbePair>,
{
    pairs
        .into_iter()
        .map(|p| Ok((model.input(table.get(p.left)?, table.get(p.right)?)?, p.label())))
        .collect()
}

/// Fraction of examples where `prob > 0.5` agrees with the label; exact ties predict negative.
pub fn accuracy<F>(examples: &[(Vec<f64>, f64)], prob: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let correct: usize = examples
        .par_iter()
        .map(|(x, y)| usize::from((prob(x) > 0.5) == (*y > 0.5)))
        .sum();
    correct as f64 / examples.len() as f64
}

pub fn train_probe(
    config: ProbeConfig,
    dataset: &ProbeDataset,
    table: &EmbeddingTable,
) -> Result<(ProbeModel, TrainReport)> {
    config.validate()?;
    missing_characters(dataset, table)?;
    let started = Instant::now();
    let mut model = ProbeModel::new(config, table.dim())?;
    let train = prepare(&model, dataset.split(Split::Train), table)?;
    let test = prepare(&model, dataset.split(Split::Test), table)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("train split is empty".into()));
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = stream(config.seed, Purpose::ProbeShuffle, 0);
    let mut grad = vec![0.0; model.params.len()];
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (x, y) = &train[i];
                batch_loss += model.accumulate_gradient(x, *y, scale, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            model.adam_update(&grad);
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteParameter { epoch, batch });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let test_accuracy = (!test.is_empty()).then(|| accuracy(&test, |x| sigmoid(model.logit(x))));
        log::debug!("epoch {epoch}: loss {:.6} acc {:?}", epoch_loss / train.len() as f64, test_accuracy);
        epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            test_accuracy,
        });
    }

    let report = TrainReport {
        config,
        train_pairs: train.len(),
        test_pairs: test.len(),
        final_accuracy: epochs.last().and_then(|e| e.test_accuracy),
        epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Test-split accuracy of a trained probe.
pub fn evaluate_probe(model: &ProbeModel, dataset: &ProbeDataset, table: &EmbeddingTable) -> Result<f64> {
    missing_characters(dataset, table)?;
    if table.dim() != model.embed_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.embed_dim(),
            actual: table.dim(),
        });
    }
    let test = prepare(model, dataset.split(Split::Test), table)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset("test split is empty".into()));
    }
    Ok(accuracy(&test, |x| sigmoid(model.logit(x))))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Denominator floor for [`relative_error`]; gradients below it are compared absolutely.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic gradient and central
/// differences `(L(p+h) - L(p-h)) / 2h` over every parameter.
pub fn gradient_check_input(model: &ProbeModel, x: &[f64], label: f64, h: f64) -> f64 {
    let analytic = model.gradient(x, label, 1.0);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let plus = probe.loss(x, label, 1.0);
        probe.params[i] = orig - h;
        let minus = probe.loss(x, label, 1.0);
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(a, numeric));
    }
    worst
}

pub fn gradient_check(model: &ProbeModel, pair: &ProbePair, table: &EmbeddingTable, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let x = model.input(table.get(pair.left)?, table.get(pair.right)?)?;
    Ok(gradient_check_input(model, &x, pair.label(), h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation and range of repeated-run accuracies.
pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Spread {
        mean,
        std,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSweep {
    pub accuracies: Vec<(usize, f64)>,
    pub spread: f64,
    pub within_tolerance: bool,
}

/// Trains one probe per layer count in `1..=5`; a spread of at least
/// [`LAYER_SPREAD_WARNING`] is logged, not treated as failure.
pub fn layer_sweep(base: ProbeConfig, dataset: &ProbeDataset, table: &EmbeddingTable) -> Result<LayerSweep> {
    let mut accuracies = Vec::new();
    for layers in 1..=5 {
        let (_, report) = train_probe(ProbeConfig { layers, ..base }, dataset, table)?;
        let acc = report
            .final_accuracy
            .ok_or_else(|| Error::EmptyDataset("test split is empty".into()))?;
        accuracies.push((layers, acc));
    }
    let s = spread(&accuracies.iter().map(|(_, a)| *a).collect::<Vec<_>>()).expect("five runs");
    let range = s.max - s.min;
    let within_tolerance = range < LAYER_SPREAD_WARNING;
    if !within_tolerance {
        log::warn!("probe accuracy varies by {range:.3} across layer counts 1-5");
    }
    Ok(LayerSweep {
        accuracies,
        spread: range,
        within_tolerance,
    })
}
