//! Molecule scorers used as rewards: structural descriptors, a logP
//! approximation with its penalized composition, and a graph-convolution
//! regressor.

mod descriptors;
mod gcn;
mod logp;

pub use descriptors::{
    descriptor, descriptor_critics, heavy_atoms, heteroatom_fraction, longest_carbon_chain, nitrogen_count,
    ring_count, Descriptor,
};
pub use gcn::{
    featurize, gcn_reward, gcn_train, normalized_adjacency, split_by_key, GcnConfig, GcnCritic, GcnRegressor,
    GcnTrainConfig, GcnTraining, LabeledSet, GCN_FEATURES,
};
pub use logp::{
    complexity_penalty, logp_contribution, logp_proxy, long_cycle_penalty, penalized_logp, ring_sizes,
    PenalizedLogp,
};

use alloc::string::String;

use crate::graph::MolGraph;
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CriticError {
    #[error("molecule is not scorable: {0}")]
    Invalid(&'static str),
    #[error("score is not finite: {0}")]
    NonFinite(f64),
    #[error("critic failed: {0}")]
    Failed(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A deterministic molecule scorer supplying the terminal reward.
pub trait Critic {
    fn name(&self) -> &str;

    /// Score of a valid molecule.
    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError>;
}

impl<C: Critic + ?Sized> Critic for &mut C {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        (**self).score(g)
    }
}

impl<C: Critic + ?Sized> Critic for alloc::boxed::Box<C> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        (**self).score(g)
    }
}

/// Multiplies another critic's score by a constant.
#[derive(Debug, Clone)]
pub struct Scaled<C> {
    pub inner: C,
    pub factor: f64,
    name: String,
}

impl<C: Critic> Scaled<C> {
    pub fn new(inner: C, factor: f64) -> Self {
        let name = alloc::format!("{}*{}", factor, inner.name());
        Scaled { inner, factor, name }
    }
}

impl<C: Critic> Critic for Scaled<C> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        Ok(self.factor * self.inner.score(g)?)
    }
}

/// Returns the same value for every molecule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Critic for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&mut self, _: &MolGraph) -> Result<f64, CriticError> {
        Ok(self.0)
    }
}
