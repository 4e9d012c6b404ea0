use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::likelihood::nll;
use super::{ModelError, MolecularRnn, MolecularRnnConfig, NllOutput};
use crate::codec::BfsSequence;
use crate::element::ValencyTable;
use crate::nn::{Adam, AdamConfig, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning rate the decay schedule should reach at the final step.
    pub final_lr: f64,
    pub clip_norm: f64,
    /// Score sequences under valence masking.
    pub masked_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 250,
            batch_size: 512,
            adam: AdamConfig::default(),
            final_lr: 1e-5,
            clip_norm: 5.0,
            masked_loss: false,
        }
    }
}

/// Parameters, optimizer moments and the training random stream.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub net: MolecularRnn,
    pub params: ParamStore,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: u64,
}

impl ModelState {
    pub fn new(config: MolecularRnnConfig, adam: AdamConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, params) = MolecularRnn::initialize(config, &mut rng)?;
        let adam = Adam::new(adam, &params);
        Ok(ModelState {
            net,
            params,
            adam,
            rng,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &MolecularRnnConfig {
        self.net.config()
    }

    /// Zeroes the output layers so every prediction starts uniform.
    pub fn zero_output_layers(&mut self) {
        for id in self.net.output_layers() {
            self.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    /// Mean negative log-likelihood per molecule.
    pub nll: f64,
    /// Total negative log-likelihood over scored decisions.
    pub per_step_nll: f64,
    pub optimizer_steps: u64,
    pub lr: f64,
}

/// Batch loss and gradient for one minibatch.
pub type GradientFn<'a> = dyn FnMut(&MolecularRnn, &ParamStore, &[BfsSequence]) -> Result<NllOutput, ModelError> + 'a;

/// One pass over `data` in a shuffled order drawn from the state's stream.
/// `gradient` computes the batch loss and gradient; [`nll`] is the serial default.
pub fn train_epoch(
    state: &mut ModelState,
    data: &[BfsSequence],
    vt: &ValencyTable,
    cfg: &TrainConfig,
    gradient: Option<&mut GradientFn<'_>>,
) -> Result<EpochStats, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut serial = |net: &MolecularRnn, params: &ParamStore, batch: &[BfsSequence]| nll(net, params, batch, vt, cfg.masked_loss);
    let gradient: &mut GradientFn<'_> = match gradient {
        Some(g) => g,
        None => &mut serial,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut state.rng);
    let mut total = 0.0;
    let mut terms = 0;
    let lr = state.adam.current_lr();
    for chunk in order.chunks(cfg.batch_size.max(1)) {
        let batch: Vec<BfsSequence> = chunk.iter().map(|&k| data[k].clone()).collect();
        let mut out = gradient(&state.net, &state.params, &batch)?;
        total += out.loss * batch.len() as f64;
        terms += out.terms;
        if cfg.clip_norm > 0.0 {
            out.grads.clip_norm(cfg.clip_norm);
        }
        state.adam.step(&mut state.params, &out.grads);
    }
    state.epoch += 1;
    Ok(EpochStats {
        epoch: state.epoch,
        nll: total / data.len() as f64,
        per_step_nll: total / terms.max(1) as f64,
        optimizer_steps: state.adam.step,
        lr,
    })
}
