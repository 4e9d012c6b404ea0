use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Critic, CriticError};
use crate::canon::canonical_key;
use crate::element::ELEMENT_COUNT;
use crate::graph::MolGraph;
use crate::nn::{Adam, AdamConfig, Grads, Linear, ParamStore, Tape, Tensor, Var};

/// Element one-hot, degree one-hot for degrees 1 to 4, and used valence.
pub const GCN_FEATURES: usize = ELEMENT_COUNT + 4 + 1;

pub fn featurize(g: &MolGraph) -> Tensor {
    let n = g.atom_count();
    let mut t = Tensor::zeros(n, GCN_FEATURES);
    let data = t.data_mut();
    for a in 0..n {
        let row = &mut data[a * GCN_FEATURES..(a + 1) * GCN_FEATURES];
        row[g.element(a).index()] = 1.0;
        let degree = g.degree(a);
        if (1..=4).contains(&degree) {
            row[ELEMENT_COUNT + degree - 1] = 1.0;
        }
        row[GCN_FEATURES - 1] = g.neighbors(a).iter().map(|&(_, o)| o.order() as f64).sum();
    }
    t
}

/// `D^-1/2 (A + I) D^-1/2`.
pub fn normalized_adjacency(g: &MolGraph) -> Tensor {
    let n = g.atom_count();
    let inv_sqrt: Vec<f64> = (0..n).map(|a| 1.0 / libm::sqrt((g.degree(a) + 1) as f64)).collect();
    let mut t = Tensor::zeros(n, n);
    let data = t.data_mut();
    for a in 0..n {
        data[a * n + a] = inv_sqrt[a] * inv_sqrt[a];
        for &(b, _) in g.neighbors(a) {
            data[a * n + b] = inv_sqrt[a] * inv_sqrt[b];
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcnConfig {
    pub layers: usize,
    pub hidden: usize,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig { layers: 4, hidden: 128 }
    }
}

/// Graph-convolution regressor: `H ← relu(Â H W + b)` per layer, then an
/// affine readout of the mean- and sum-pooled atom states. Predictions are on
/// the z-scored label scale; `label_mean`/`label_std` map them back.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnRegressor {
    pub config: GcnConfig,
    pub params: ParamStore,
    layers: Vec<Linear>,
    readout: Linear,
    pub label_mean: f64,
    pub label_std: f64,
}

impl GcnRegressor {
    pub fn new<R: Rng + ?Sized>(config: GcnConfig, rng: &mut R) -> Self {
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(config.layers);
        let mut width = GCN_FEATURES;
        for l in 0..config.layers {
            layers.push(Linear::new(&mut params, &format!("gcn.{l}"), width, config.hidden, rng));
            width = config.hidden;
        }
        let readout = Linear::new(&mut params, "readout", 2 * width, 1, rng);
        GcnRegressor {
            config,
            params,
            layers,
            readout,
            label_mean: 0.0,
            label_std: 1.0,
        }
    }

    /// Rebuilds a regressor from named parameter values.
    pub fn from_parts(
        config: GcnConfig,
        named: Vec<(String, Tensor)>,
        label_mean: f64,
        label_std: f64,
    ) -> Result<Self, CriticError> {
        let mut model = Self::new(config, &mut ChaCha8Rng::seed_from_u64(0));
        if named.len() != model.params.len() {
            return Err(CriticError::Failed(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                named.len()
            )));
        }
        for (name, value) in named {
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| CriticError::Failed(format!("unknown parameter {name}")))?;
            model.params.set(id, value)?;
        }
        if !(label_std > 0.0 && label_std.is_finite() && label_mean.is_finite()) {
            return Err(CriticError::Failed(String::from("invalid label normalization")));
        }
        model.label_mean = label_mean;
        model.label_std = label_std;
        Ok(model)
    }

    fn forward(&self, tape: &mut Tape, g: &MolGraph) -> Result<Var, CriticError> {
        if g.is_empty() {
            return Err(CriticError::Invalid("empty graph"));
        }
        let adj = normalized_adjacency(g);
        let mut h = tape.input(featurize(g));
        for layer in &self.layers {
            let p = tape.propagate(&adj, h);
            let a = layer.forward(tape, p);
            h = tape.relu(a);
        }
        let mean = tape.mean_rows(h);
        let sum = tape.sum_rows(h);
        let pooled = tape.concat(&[mean, sum]);
        Ok(self.readout.forward(tape, pooled))
    }

    /// Prediction on the normalized scale.
    pub fn predict_normalized(&self, g: &MolGraph) -> Result<f64, CriticError> {
        let mut tape = Tape::new(&self.params);
        let y = self.forward(&mut tape, g)?;
        Ok(tape.value(y)[0])
    }

    /// Prediction in label units.
    pub fn predict(&self, g: &MolGraph) -> Result<f64, CriticError> {
        Ok(self.label_mean + self.label_std * self.predict_normalized(g)?)
    }

    /// Mean squared error against normalized targets, its gradient, and the
    /// activation signature.
    pub fn loss(&self, params: &ParamStore, batch: &[(&MolGraph, f64)]) -> Result<(f64, Grads, u64), CriticError> {
        if batch.is_empty() {
            return Err(CriticError::EmptySplit("batch"));
        }
        let weight = 1.0 / batch.len() as f64;
        let mut grads = Grads::zeros(params);
        let mut loss = 0.0;
        let mut signature = 0u64;
        for &(g, target) in batch {
            let mut tape = Tape::new(params);
            let y = self.forward(&mut tape, g)?;
            tape.squared_error(y, target, weight);
            tape.backward_into(&mut grads);
            loss += tape.loss();
            signature = signature.rotate_left(5) ^ tape.signature();
        }
        Ok((loss, grads, signature))
    }
}

/// Molecules with real-valued labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub molecules: Vec<MolGraph>,
    pub labels: Vec<f64>,
    pub unit: String,
}

/// Assigns each molecule to train or test by its canonical-key digest, so
/// duplicates always land on the same side. Returns `(train, test)` indices.
pub fn split_by_key(molecules: &[MolGraph], test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let threshold = (test_fraction.clamp(0.0, 1.0) * 10_000.0) as u64;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, g) in molecules.iter().enumerate() {
        if canonical_key(g).digest() % 10_000 < threshold {
            test.push(k);
        } else {
            train.push(k);
        }
    }
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcnTrainConfig {
    pub model: GcnConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub epoch_decay: f64,
    pub test_fraction: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for GcnTrainConfig {
    fn default() -> Self {
        GcnTrainConfig {
            model: GcnConfig::default(),
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            epoch_decay: 0.8,
            test_fraction: 0.2,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnTraining {
    pub model: GcnRegressor,
    /// Root-mean-square error on the test split, in label units.
    pub test_rmse: f64,
    pub train_rmse: f64,
    /// Standard deviation of the test labels.
    pub test_label_std: f64,
    /// Mean normalized squared error per epoch.
    pub epoch_losses: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
}

fn rmse(model: &GcnRegressor, data: &LabeledSet, idx: &[usize]) -> Result<f64, CriticError> {
    let mut sum = 0.0;
    for &k in idx {
        let d = model.predict(&data.molecules[k])? - data.labels[k];
        sum += d * d;
    }
    Ok(libm::sqrt(sum / idx.len() as f64))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Fits a regressor by mean squared error on z-scored labels.
pub fn gcn_train(data: &LabeledSet, cfg: &GcnTrainConfig) -> Result<GcnTraining, CriticError> {
    if data.molecules.len() != data.labels.len() {
        return Err(CriticError::Failed(String::from("molecule and label counts differ")));
    }
    if let Some(bad) = data.labels.iter().find(|l| !l.is_finite()) {
        return Err(CriticError::NonFinite(*bad));
    }
    let (train, test) = split_by_key(&data.molecules, cfg.test_fraction);
    if train.is_empty() {
        return Err(CriticError::EmptySplit("training"));
    }
    if test.is_empty() {
        return Err(CriticError::EmptySplit("test"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GcnRegressor::new(cfg.model, &mut rng);
    let (mean, std) = mean_std(train.iter().map(|&k| data.labels[k]));
    model.label_mean = mean;
    model.label_std = if std > 0.0 { std } else { 1.0 };
    let batch_size = cfg.batch_size.max(1);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            decay: cfg.epoch_decay,
            decay_every: train.len().div_ceil(batch_size) as u64,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut order = train.clone();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&MolGraph, f64)> = chunk
                .iter()
                .map(|&k| (&data.molecules[k], (data.labels[k] - model.label_mean) / model.label_std))
                .collect();
            let (loss, mut grads, _) = model.loss(&model.params, &batch)?;
            if !grads.is_finite() {
                return Err(CriticError::Failed(String::from("non-finite gradient")));
            }
            if cfg.clip_norm > 0.0 {
                grads.clip_norm(cfg.clip_norm);
            }
            adam.step(&mut model.params, &grads);
            total += loss * chunk.len() as f64;
        }
        epoch_losses.push(total / train.len() as f64);
        log::debug!("gcn epoch {} loss {:.5}", epoch_losses.len(), total / train.len() as f64);
    }
    let (_, test_label_std) = mean_std(test.iter().map(|&k| data.labels[k]));
    Ok(GcnTraining {
        test_rmse: rmse(&model, data, &test)?,
        train_rmse: rmse(&model, data, &train)?,
        test_label_std,
        epoch_losses,
        train_size: train.len(),
        test_size: test.len(),
        model,
    })
}

/// Reward `exp(t + 1)` where `t` is the normalized prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnCritic {
    pub model: GcnRegressor,
}

impl GcnCritic {
    pub fn reward_from_normalized(t: f64) -> f64 {
        libm::exp(t + 1.0)
    }
}

impl Critic for GcnCritic {
    fn name(&self) -> &str {
        "gcn"
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        let t = self.model.predict_normalized(g)?;
        let r = Self::reward_from_normalized(t);
        if r.is_finite() {
            Ok(r)
        } else {
            Err(CriticError::NonFinite(r))
        }
    }
}

pub fn gcn_reward(model: GcnRegressor) -> GcnCritic {
    GcnCritic { model }
}
