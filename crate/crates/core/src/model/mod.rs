//! The graph-recurrent generator: a node-level GRU stack predicting atom
//! types and an edge-level GRU stack predicting bond categories to the
//! preceding `window` atoms.

mod generate;
mod likelihood;
mod train;

pub use generate::{probe, sample, sample_one, Generator, Probe, RowDraw, Step, StepDistribution, StepKind, Trajectory};
pub use likelihood::{nll, nll_sequence, replay, replay_regularized, scored_terms, sequence_log_prob, NllOutput, Terminal};
pub use train::{train_epoch, EpochStats, GradientFn, ModelState, TrainConfig};

use alloc::vec::Vec;
use rand::Rng;

use crate::codec::{BfsSequence, CodecConfig};
use crate::element::{Element, ELEMENT_COUNT};
use crate::nn::{GruStack, Init, Linear, Mlp, NnError, ParamId, ParamStore, Tape, Tensor, Var};

/// Edge categories: 0 = no bond, 1..=3 = bond order.
pub const EDGE_CATEGORIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MolecularRnnConfig {
    pub node_embed: usize,
    pub edge_embed: usize,
    pub node_hidden: usize,
    pub node_layers: usize,
    pub node_mlp_hidden: usize,
    pub edge_hidden: usize,
    pub edge_layers: usize,
    pub edge_mlp_hidden: usize,
    pub window: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
}

impl Default for MolecularRnnConfig {
    fn default() -> Self {
        MolecularRnnConfig {
            node_embed: 128,
            edge_embed: 16,
            node_hidden: 256,
            node_layers: 4,
            node_mlp_hidden: 128,
            edge_hidden: 128,
            edge_layers: 4,
            edge_mlp_hidden: 128,
            window: 12,
            min_atoms: 10,
            max_atoms: 50,
        }
    }
}

impl MolecularRnnConfig {
    /// Reduced sizes for single-core runs.
    pub fn desk() -> Self {
        MolecularRnnConfig {
            node_embed: 32,
            edge_embed: 8,
            node_hidden: 96,
            node_layers: 2,
            node_mlp_hidden: 64,
            edge_hidden: 48,
            edge_layers: 2,
            edge_mlp_hidden: 48,
            ..Self::default()
        }
    }

    pub fn codec(&self) -> CodecConfig {
        CodecConfig {
            window: self.window,
            min_atoms: self.min_atoms,
            max_atoms: self.max_atoms,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let sizes = [
            self.node_embed,
            self.edge_embed,
            self.node_hidden,
            self.node_layers,
            self.node_mlp_hidden,
            self.edge_hidden,
            self.edge_layers,
            self.edge_mlp_hidden,
        ];
        if sizes.contains(&0) {
            return Err(ModelError::Config("layer sizes must be positive"));
        }
        self.codec()
            .validate()
            .map_err(|_| ModelError::Config("window and atom bounds are inconsistent"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(&'static str),
    #[error("malformed sequence: {0}")]
    Malformed(&'static str),
    #[error("sequence window {found} does not match model window {expected}")]
    WindowMismatch { expected: usize, found: usize },
    #[error("sequence has {atoms} atoms, model allows at most {max}")]
    TooLong { atoms: usize, max: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Parameter handles of the network; the values live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularRnn {
    config: MolecularRnnConfig,
    atom_embedding: ParamId,
    edge_embedding: ParamId,
    edge_start: ParamId,
    node_rnn: GruStack,
    node_mlp: Mlp,
    node_to_edge: Linear,
    edge_rnn: GruStack,
    edge_mlp: Mlp,
}

impl MolecularRnn {
    /// Registers all parameters in `store`, in a fixed order.
    pub fn new<R: Rng + ?Sized>(config: MolecularRnnConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let c = &config;
        let atom_embedding = store.add("atom_embedding", ELEMENT_COUNT, c.node_embed, Init::Uniform, rng);
        let edge_embedding = store.add("edge_embedding", EDGE_CATEGORIES, c.edge_embed, Init::Uniform, rng);
        let edge_start = store.add("edge_start", 1, c.edge_embed, Init::Uniform, rng);
        let node_input = c.window * c.edge_embed + c.node_embed;
        let node_rnn = GruStack::new(store, "node_rnn", c.node_layers, node_input, c.node_hidden, rng);
        let node_mlp = Mlp::new(store, "node_mlp", c.node_hidden, c.node_mlp_hidden, ELEMENT_COUNT, rng);
        let node_to_edge = Linear::new(store, "node_to_edge", c.node_hidden, c.edge_hidden, rng);
        let edge_rnn = GruStack::new(store, "edge_rnn", c.edge_layers, c.edge_embed + c.node_embed, c.edge_hidden, rng);
        let edge_mlp = Mlp::new(store, "edge_mlp", c.edge_hidden, c.edge_mlp_hidden, EDGE_CATEGORIES, rng);
        Ok(MolecularRnn {
            config,
            atom_embedding,
            edge_embedding,
            edge_start,
            node_rnn,
            node_mlp,
            node_to_edge,
            edge_rnn,
            edge_mlp,
        })
    }

    /// Builds the network together with a freshly initialized store.
    pub fn initialize<R: Rng + ?Sized>(config: MolecularRnnConfig, rng: &mut R) -> Result<(Self, ParamStore), ModelError> {
        let mut store = ParamStore::new();
        let net = Self::new(config, &mut store, rng)?;
        Ok((net, store))
    }

    pub fn config(&self) -> &MolecularRnnConfig {
        &self.config
    }

    /// Output layers of both heads; zeroing them makes every prediction uniform.
    pub fn output_layers(&self) -> [ParamId; 4] {
        [
            self.node_mlp.output.w,
            self.node_mlp.output.b,
            self.edge_mlp.output.w,
            self.edge_mlp.output.b,
        ]
    }

    pub(crate) fn check_sequence(&self, seq: &BfsSequence) -> Result<(), ModelError> {
        if seq.window() != self.config.window {
            return Err(ModelError::WindowMismatch {
                expected: self.config.window,
                found: seq.window(),
            });
        }
        if seq.len() > self.config.max_atoms {
            return Err(ModelError::TooLong {
                atoms: seq.len(),
                max: self.config.max_atoms,
            });
        }
        if seq.atom_types()[0] != Element::C {
            return Err(ModelError::Malformed("first atom must be carbon"));
        }
        Ok(())
    }

    pub(crate) fn zero_node_hidden(&self, tape: &mut Tape) -> Vec<Var> {
        let zero = tape.input(Tensor::zeros(1, self.config.node_hidden));
        alloc::vec![zero; self.config.node_layers]
    }

    /// Advances the node stack given the previous atom's edge row and type;
    /// returns the new states, atom-type logits and the initial edge state.
    pub(crate) fn node_step(
        &self,
        tape: &mut Tape,
        hidden: &[Var],
        prev_row: &[u8],
        prev_atom: Element,
    ) -> Result<(Vec<Var>, Var, Vec<Var>), ModelError> {
        let mut parts = Vec::with_capacity(prev_row.len() + 1);
        for &cat in prev_row {
            parts.push(tape.embed(self.edge_embedding, cat as usize));
        }
        parts.push(tape.embed(self.atom_embedding, prev_atom.index()));
        let x = tape.concat(&parts);
        let hidden = self.node_rnn.step(tape, hidden, x)?;
        let top = *hidden.last().expect("at least one layer");
        let logits = self.node_mlp.forward(tape, top);
        let edge_init = self.node_to_edge.forward(tape, top);
        let edge_hidden = alloc::vec![edge_init; self.config.edge_layers];
        Ok((hidden, logits, edge_hidden))
    }

    pub(crate) fn atom_input(&self, tape: &mut Tape, atom: Element) -> Var {
        tape.embed(self.atom_embedding, atom.index())
    }

    /// One edge sub-step; `prev` is the category chosen at the previous
    /// position of the row, `None` at the first position.
    pub(crate) fn edge_step(
        &self,
        tape: &mut Tape,
        hidden: &[Var],
        prev: Option<u8>,
        atom: Var,
    ) -> Result<(Vec<Var>, Var), ModelError> {
        let e = match prev {
            Some(cat) => tape.embed(self.edge_embedding, cat as usize),
            None => tape.embed(self.edge_start, 0),
        };
        let x = tape.concat(&[e, atom]);
        let hidden = self.edge_rnn.step(tape, hidden, x)?;
        let logits = self.edge_mlp.forward(tape, *hidden.last().expect("at least one layer"));
        Ok((hidden, logits))
    }
}

/// Which bond categories keep both endpoints within their valence.
pub(crate) fn edge_mask(
    used_new: u32,
    limit_new: u32,
    used_partner: u32,
    limit_partner: u32,
) -> [bool; EDGE_CATEGORIES] {
    let mut mask = [true; EDGE_CATEGORIES];
    for (k, slot) in mask.iter_mut().enumerate().skip(1) {
        let k = k as u32;
        *slot = used_new + k <= limit_new && used_partner + k <= limit_partner;
    }
    mask
}
