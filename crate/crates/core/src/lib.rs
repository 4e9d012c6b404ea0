#![no_std]

//! Graph-recurrent generation of molecular graphs.

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod canon;
pub mod element;
pub mod graph;

pub use canon::{canonical_form, canonical_key, CanonicalForm, CanonicalKey};
pub use element::{BondOrder, Element, ValencyTable, ELEMENT_COUNT};
pub use graph::{Bond, GraphError, MolGraph, ValidityReport};
pub mod smiles;
pub mod codec;
pub mod nn;
pub mod model;
pub mod critics;
pub mod rl;
pub mod metrics;
