//! Thread-pool execution of sampling and gradient computation.
//!
//! Work is cut into fixed-size shards whose results are combined in shard
//! order, so every output is bit-identical for any number of workers.

use molrnn_core::codec::BfsSequence;
use molrnn_core::model::{nll, sample_one, ModelError, MolecularRnn, NllOutput, Trajectory};
use molrnn_core::nn::{Grads, ParamStore};
use molrnn_core::rl::{pg_terms, Engine, PgOutput, RlConfig, RlError};
use molrnn_core::ValencyTable;
use rayon::prelude::*;

/// Molecules or trajectories per gradient shard.
pub const SHARD: usize = 16;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MOLRNN_WORKERS";

pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
        Ok(Workers { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Sample `index` draws from stream `index` of `seed`, whatever thread runs it.
    pub fn sample(
        &self,
        net: &MolecularRnn,
        params: &ParamStore,
        count: usize,
        vt: &ValencyTable,
        masked: bool,
        seed: u64,
    ) -> Result<Vec<Trajectory>, ModelError> {
        self.pool.install(|| {
            (0..count as u64)
                .into_par_iter()
                .map(|k| sample_one(net, params, vt, masked, seed, k))
                .collect()
        })
    }

    /// Batch-mean likelihood loss, computed shard by shard.
    pub fn nll(
        &self,
        net: &MolecularRnn,
        params: &ParamStore,
        batch: &[BfsSequence],
        vt: &ValencyTable,
        masked: bool,
    ) -> Result<NllOutput, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let parts: Vec<NllOutput> = self.pool.install(|| {
            batch
                .par_chunks(SHARD)
                .map(|shard| nll(net, params, shard, vt, masked))
                .collect::<Result<_, _>>()
        })?;
        let mut out = NllOutput {
            loss: 0.0,
            grads: Grads::zeros(params),
            terms: 0,
            signature: 0,
        };
        for (part, shard) in parts.into_iter().zip(batch.chunks(SHARD)) {
            let w = shard.len() as f64 / batch.len() as f64;
            let mut g = part.grads;
            g.scale(w);
            out.grads.add_assign(&g);
            out.loss += w * part.loss;
            out.terms += part.terms;
            out.signature = out.signature.rotate_left(7) ^ part.signature;
        }
        Ok(out)
    }
}

/// Shared references drive fine-tuning, so one pool serves a whole run.
impl Engine for &Workers {
    fn rollout(
        &mut self,
        net: &MolecularRnn,
        params: &ParamStore,
        count: usize,
        vt: &ValencyTable,
        masked: bool,
        seed: u64,
    ) -> Result<Vec<Trajectory>, ModelError> {
        self.sample(net, params, count, vt, masked, seed)
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
        if trajectories.is_empty() {
            return Err(RlError::EmptyBatch);
        }
        let scale = 1.0 / trajectories.len() as f64;
        let parts: Vec<PgOutput> = self.pool.install(|| {
            trajectories
                .par_chunks(SHARD)
                .map(|shard| pg_terms(net, params, shard, vt, cfg, baseline, scale))
                .collect::<Result<_, _>>()
        })?;
        let mut out = PgOutput {
            loss: 0.0,
            grads: Grads::zeros(params),
            signature: 0,
            trajectories: trajectories.len(),
        };
        for part in parts {
            out.loss += part.loss;
            out.grads.add_assign(&part.grads);
            out.signature = out.signature.rotate_left(7) ^ part.signature;
        }
        Ok(out)
    }
}
