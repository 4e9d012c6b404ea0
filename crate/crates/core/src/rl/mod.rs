//! Policy-gradient fine-tuning against a critic, with per-step structural
//! penalties for bonds that break valency.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::canon::canonical_key;
use crate::critics::Critic;
use crate::element::ValencyTable;
use crate::model::{
    replay_regularized, sample, ModelError, ModelState, MolecularRnn, StepKind, Terminal, Trajectory,
};
use crate::nn::{Adam, AdamConfig, Grads, ParamStore, Tape};

/// Which end of a trajectory the discount shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscountOrientation {
    /// Node `i` of `N` gets `γ^(N−i)`: steps near the finished molecule count most.
    FromTerminal,
    /// Node `i` gets `γ^i`.
    FromStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlConfig {
    pub gamma: f64,
    /// Multiplier on critic scores.
    pub reward_scale: f64,
    pub iterations: usize,
    pub batch: usize,
    /// Constant Adam learning rate.
    pub lr: f64,
    /// Reward assigned to each bond step that broke valency.
    pub penalty: f64,
    /// Sample rollouts under valence masking.
    pub masked: bool,
    pub orientation: DiscountOrientation,
    /// Subtract a moving average of past mean rewards from terminal rewards.
    pub baseline: bool,
    pub baseline_momentum: f64,
    /// Weight of the entropy bonus.
    pub entropy: f64,
    pub clip_norm: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.97,
            reward_scale: 1.0,
            iterations: 300,
            batch: 512,
            lr: 1e-5,
            penalty: -10.0,
            masked: true,
            orientation: DiscountOrientation::FromTerminal,
            baseline: true,
            baseline_momentum: 0.9,
            entropy: 0.0,
            clip_norm: 5.0,
        }
    }
}

impl RlConfig {
    /// Penalty-only polishing: unmasked rollouts and no property critic.
    pub fn structural_penalty() -> Self {
        RlConfig {
            masked: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RlError::Config("discount must lie in (0, 1]"));
        }
        if self.batch == 0 {
            return Err(RlError::Config("batch must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(RlError::Config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.baseline_momentum) {
            return Err(RlError::Config("baseline momentum must lie in [0, 1)"));
        }
        if !(self.penalty.is_finite() && self.reward_scale.is_finite() && self.entropy.is_finite()) {
            return Err(RlError::Config("reward settings must be finite"));
        }
        Ok(())
    }

    /// Discount applied at node `node` of a trajectory with `nodes` node steps.
    pub fn discount(&self, node: usize, nodes: usize) -> f64 {
        let exponent = match self.orientation {
            DiscountOrientation::FromTerminal => nodes.saturating_sub(node),
            DiscountOrientation::FromStart => node,
        };
        libm::pow(self.gamma, exponent as f64)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("invalid fine-tuning config: {0}")]
    Config(&'static str),
    #[error("no trajectories to learn from")]
    EmptyBatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Marks every bond step that pushed an endpoint past its valence with a
/// fixed `penalty` reward. Applying it twice changes nothing further.
pub fn apply_structural_penalty(trajectories: &mut [Trajectory], penalty: f64) {
    for t in trajectories {
        for s in &mut t.steps {
            if s.violation {
                s.reward_override = Some(penalty);
            }
        }
    }
}

/// `−Σ_i R_i · log p_i` for one trajectory given `(node, log p)` pairs, where
/// `R_i` is the discounted terminal reward. Reference form of [`pg_loss`].
pub fn pg_objective(steps: &[(usize, f64)], nodes: usize, reward: f64, cfg: &RlConfig) -> f64 {
    -steps
        .iter()
        .map(|&(node, lp)| reward * cfg.discount(node, nodes) * lp)
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOutput {
    /// Summed weighted loss of the given trajectories.
    pub loss: f64,
    pub grads: Grads,
    pub signature: u64,
    pub trajectories: usize,
}

/// Loss contribution of `trajectories` with every term multiplied by `scale`.
/// Terminal rewards are `t.reward − baseline`, discounted per node; steps
/// carrying a reward override use it undiscounted. The terminal row is
/// scored with its atom type summed out.
pub fn pg_terms(
    net: &MolecularRnn,
    params: &ParamStore,
    trajectories: &[Trajectory],
    vt: &ValencyTable,
    cfg: &RlConfig,
    baseline: f64,
    scale: f64,
) -> Result<PgOutput, RlError> {
    let mut grads = Grads::zeros(params);
    let mut loss = 0.0;
    let mut signature = 0u64;
    for t in trajectories {
        let overrides: BTreeMap<(usize, StepKind), f64> = t
            .steps
            .iter()
            .filter_map(|s| s.reward_override.map(|r| ((s.node, s.kind), r)))
            .collect();
        let nodes = t.node_steps();
        let advantage = t.reward - baseline;
        let mut tape = Tape::new(params);
        replay_regularized(
            net,
            &mut tape,
            &t.sequence,
            Terminal::Marginal,
            t.masked.then_some(vt),
            &mut |node, kind| {
                let r = overrides
                    .get(&(node, kind))
                    .copied()
                    .unwrap_or_else(|| advantage * cfg.discount(node, nodes));
                scale * r
            },
            scale * cfg.entropy,
        )?;
        tape.backward_into(&mut grads);
        loss += tape.loss();
        signature = signature.rotate_left(9) ^ tape.signature();
    }
    Ok(PgOutput {
        loss,
        grads,
        signature,
        trajectories: trajectories.len(),
    })
}

/// Batch-mean policy-gradient loss.
pub fn pg_loss(
    net: &MolecularRnn,
    params: &ParamStore,
    trajectories: &[Trajectory],
    vt: &ValencyTable,
    cfg: &RlConfig,
    baseline: f64,
) -> Result<PgOutput, RlError> {
    if trajectories.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    pg_terms(net, params, trajectories, vt, cfg, baseline, 1.0 / trajectories.len() as f64)
}

/// Where rollouts and gradients are computed; the serial engine runs inline.
pub trait Engine {
    fn rollout(
        &mut self,
        net: &MolecularRnn,
        params: &ParamStore,
        count: usize,
        vt: &ValencyTable,
        masked: bool,
        seed: u64,
    ) -> Result<Vec<Trajectory>, ModelError>;

    fn gradient(
        &mut self,
        net: &MolecularRnn,
        params: &ParamStore,
        trajectories: &[Trajectory],
        vt: &ValencyTable,
        cfg: &RlConfig,
        baseline: f64,
    ) -> Result<PgOutput, RlError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Engine for Serial {
    fn rollout(
        &mut self,
        net: &MolecularRnn,
        params: &ParamStore,
        count: usize,
        vt: &ValencyTable,
        masked: bool,
        seed: u64,
    ) -> Result<Vec<Trajectory>, ModelError> {
        sample(net, params, count, vt, masked, seed)
    }

    fn gradient(
        &mut self,
        net: &MolecularRnn,
        params: &ParamStore,
        trajectories: &[Trajectory],
        vt: &ValencyTable,
        cfg: &RlConfig,
        baseline: f64,
    ) -> Result<PgOutput, RlError> {
        pg_loss(net, params, trajectories, vt, cfg, baseline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iteration: u64,
    /// Mean terminal reward over scored trajectories, before the baseline.
    pub mean_reward: f64,
    pub max_reward: f64,
    /// Share of rollouts that are valid molecules.
    pub validity: f64,
    /// Distinct valid molecules over valid rollouts.
    pub unique: f64,
    pub masked: bool,
    pub scored: usize,
    pub dropped: usize,
    pub violating_steps: usize,
    pub baseline: f64,
    pub loss: f64,
    /// Order-sensitive digest of the rollouts' canonical keys.
    pub digest: u64,
}

fn mix(seed: u64, iteration: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ iteration.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fine-tuning loop state: iteration counter, reward baseline and rollout seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Finetuner {
    pub config: RlConfig,
    pub seed: u64,
    pub iteration: u64,
    pub baseline: Option<f64>,
}

impl Finetuner {
    /// Swaps the state's optimizer for a fresh constant-rate one.
    pub fn new(config: RlConfig, seed: u64, state: &mut ModelState) -> Result<Self, RlError> {
        config.validate()?;
        state.adam = Adam::new(
            AdamConfig {
                lr: config.lr,
                decay: 1.0,
                decay_every: 0,
                ..AdamConfig::default()
            },
            &state.params,
        );
        Ok(Finetuner {
            config,
            seed,
            iteration: 0,
            baseline: None,
        })
    }

    /// Sample, score, update once. A critic error drops that trajectory.
    pub fn step(
        &mut self,
        state: &mut ModelState,
        vt: &ValencyTable,
        mut critic: Option<&mut dyn Critic>,
        engine: &mut dyn Engine,
    ) -> Result<IterationReport, RlError> {
        let cfg = self.config;
        let seed = mix(self.seed, self.iteration);
        self.iteration += 1;
        let mut rollouts = engine.rollout(&state.net, &state.params, cfg.batch, vt, cfg.masked, seed)?;
        apply_structural_penalty(&mut rollouts, cfg.penalty);

        let mut digest = 0xcbf2_9ce4_8422_2325u64;
        let mut keys = BTreeSet::new();
        let mut valid = 0usize;
        let mut violating_steps = 0usize;
        let mut kept = Vec::with_capacity(rollouts.len());
        let mut dropped = 0usize;
        for mut t in rollouts {
            violating_steps += t.steps.iter().filter(|s| s.violation).count();
            let key = canonical_key(&t.graph);
            digest = (digest ^ key.digest()).wrapping_mul(0x0000_0100_0000_01b3);
            t.reward = 0.0;
            if t.is_valid() {
                valid += 1;
                keys.insert(key);
                if let Some(c) = critic.as_deref_mut() {
                    match c.score(&t.graph) {
                        Ok(s) if s.is_finite() => t.reward = cfg.reward_scale * s,
                        Ok(s) => {
                            log::warn!("critic {} returned {s} for sample {}; dropped", c.name(), t.index);
                            dropped += 1;
                            continue;
                        }
                        Err(e) => {
                            log::warn!("critic {} failed on sample {}: {e}; dropped", c.name(), t.index);
                            dropped += 1;
                            continue;
                        }
                    }
                }
            }
            kept.push(t);
        }
        let total = kept.len() + dropped;
        let rewards: Vec<f64> = kept.iter().map(|t| t.reward).collect();
        let mean_reward = if rewards.is_empty() {
            0.0
        } else {
            rewards.iter().sum::<f64>() / rewards.len() as f64
        };
        let max_reward = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let baseline = if cfg.baseline {
            *self.baseline.get_or_insert(mean_reward)
        } else {
            0.0
        };
        let mut loss = 0.0;
        if kept.is_empty() {
            log::warn!("iteration {}: every trajectory was dropped", self.iteration);
        } else {
            let mut out = engine.gradient(&state.net, &state.params, &kept, vt, &cfg, baseline)?;
            loss = out.loss;
            if cfg.clip_norm > 0.0 {
                out.grads.clip_norm(cfg.clip_norm);
            }
            state.adam.step(&mut state.params, &out.grads);
        }
        if let Some(b) = self.baseline.as_mut() {
            *b = cfg.baseline_momentum * *b + (1.0 - cfg.baseline_momentum) * mean_reward;
        }
        Ok(IterationReport {
            iteration: self.iteration,
            mean_reward,
            max_reward,
            validity: valid as f64 / total.max(1) as f64,
            unique: keys.len() as f64 / valid.max(1) as f64,
            masked: cfg.masked,
            scored: kept.len(),
            dropped,
            violating_steps,
            baseline,
            loss,
            digest,
        })
    }
}

/// Runs `cfg.iterations` serial fine-tuning steps.
pub fn finetune(
    state: &mut ModelState,
    mut critic: Option<&mut dyn Critic>,
    cfg: RlConfig,
    vt: &ValencyTable,
    seed: u64,
) -> Result<Vec<IterationReport>, RlError> {
    let mut tuner = Finetuner::new(cfg, seed, state)?;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let c: Option<&mut dyn Critic> = match &mut critic {
            Some(c) => Some(&mut **c),
            None => None,
        };
        reports.push(tuner.step(state, vt, c, &mut Serial)?);
    }
    Ok(reports)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = alloc::vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / libm::sqrt(vx * vy)
}

#[cfg(test)]
mod tests;
