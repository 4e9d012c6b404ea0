use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{Critic, CriticError};
use crate::element::Element;
use crate::graph::MolGraph;

/// A named structural descriptor.
#[derive(Debug, Clone, Copy)]
pub struct Descriptor {
    pub name: &'static str,
    pub definition: &'static str,
    pub eval: fn(&MolGraph) -> f64,
}

impl Critic for Descriptor {
    fn name(&self) -> &str {
        self.name
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        if g.is_empty() {
            return Err(CriticError::Invalid("empty graph"));
        }
        Ok((self.eval)(g))
    }
}

pub fn heavy_atoms(g: &MolGraph) -> f64 {
    g.atom_count() as f64
}

/// Cycle rank `|E| − |V| + components`.
pub fn ring_count(g: &MolGraph) -> f64 {
    g.cycle_rank() as f64
}

pub fn nitrogen_count(g: &MolGraph) -> f64 {
    g.atoms().iter().filter(|&&e| e == Element::N).count() as f64
}

/// Share of atoms that are not carbon; 0 for an empty graph.
pub fn heteroatom_fraction(g: &MolGraph) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    let hetero = g.atoms().iter().filter(|&&e| e != Element::C).count();
    hetero as f64 / g.atom_count() as f64
}

/// Atoms on the longest path through carbons that lie on no ring. Those
/// carbons induce a forest, so the answer is the largest tree diameter.
pub fn longest_carbon_chain(g: &MolGraph) -> f64 {
    let ring = g.ring_atoms();
    let n = g.atom_count();
    let chain: Vec<bool> = (0..n).map(|a| g.element(a) == Element::C && !ring[a]).collect();
    let farthest = |start: usize| -> (usize, usize) {
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::from([start]);
        dist[start] = 0;
        let mut best = (start, 0);
        while let Some(v) = queue.pop_front() {
            if dist[v] > best.1 {
                best = (v, dist[v]);
            }
            for &(w, _) in g.neighbors(v) {
                if chain[w] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        best
    };
    let mut seen = vec![false; n];
    let mut longest = 0;
    for a in 0..n {
        if !chain[a] || seen[a] {
            continue;
        }
        let (end, _) = farthest(a);
        let (_, length) = farthest(end);
        longest = longest.max(length + 1);
        // mark the component
        let mut stack = vec![a];
        seen[a] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in g.neighbors(v) {
                if chain[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    longest as f64
}

const REGISTRY: [Descriptor; 5] = [
    Descriptor {
        name: "heavy_atoms",
        definition: "number of heavy atoms",
        eval: heavy_atoms,
    },
    Descriptor {
        name: "ring_count",
        definition: "cycle rank |E| - |V| + components",
        eval: ring_count,
    },
    Descriptor {
        name: "nitrogen_count",
        definition: "number of nitrogen atoms",
        eval: nitrogen_count,
    },
    Descriptor {
        name: "heteroatom_fraction",
        definition: "non-carbon atoms / heavy atoms",
        eval: heteroatom_fraction,
    },
    Descriptor {
        name: "longest_carbon_chain",
        definition: "atoms on the longest path through acyclic carbons",
        eval: longest_carbon_chain,
    },
];

/// All built-in descriptors in a fixed order.
pub fn descriptor_critics() -> Vec<Descriptor> {
    REGISTRY.to_vec()
}

pub fn descriptor(name: &str) -> Option<Descriptor> {
    REGISTRY.iter().find(|d| d.name == name).copied()
}
