use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{Critic, CriticError};
use crate::element::{Element, ValencyTable};
use crate::graph::MolGraph;

/// Per-atom contribution to the logP approximation, indexed by element and
/// `[acyclic, ring]`. Values fold in the typical implicit hydrogens of each
/// atom class. This is a coarse lookup, not a fitted atom-typing scheme.
const LOGP_TABLE: [[f64; 2]; 9] = [
    [0.50, 0.30],   // C
    [-0.70, -0.45], // N
    [-0.55, -0.30], // O
    [0.40, 0.40],   // F
    [-0.20, -0.20], // P
    [0.60, 0.45],   // S
    [0.70, 0.70],   // Cl
    [0.85, 0.85],   // Br
    [1.05, 1.05],   // I
];

pub fn logp_contribution(element: Element, in_ring: bool) -> f64 {
    LOGP_TABLE[element.index()][usize::from(in_ring)]
}

/// Sum of table contributions over all atoms.
pub fn logp_proxy(g: &MolGraph) -> f64 {
    let ring = g.ring_atoms();
    // per-class counts make the sum independent of atom order
    let mut counts = [[0u32; 2]; 9];
    for (a, &in_ring) in ring.iter().enumerate() {
        counts[g.element(a).index()][usize::from(in_ring)] += 1;
    }
    Element::ALL
        .iter()
        .flat_map(|&e| [false, true].map(|r| counts[e.index()][usize::from(r)] as f64 * logp_contribution(e, r)))
        .sum()
}

/// Size of the smallest cycle through each ring bond, in bond order.
pub fn ring_sizes(g: &MolGraph) -> Vec<usize> {
    let bridges = g.bridges();
    let n = g.atom_count();
    let mut sizes = Vec::new();
    for bond in g.bonds() {
        if bridges.contains(&(bond.a, bond.b)) {
            continue;
        }
        // shortest a→b path avoiding the bond itself
        let mut dist = vec![usize::MAX; n];
        dist[bond.a] = 0;
        let mut queue = VecDeque::from([bond.a]);
        while let Some(v) = queue.pop_front() {
            if v == bond.b {
                break;
            }
            for &(w, _) in g.neighbors(v) {
                if (v, w) == (bond.a, bond.b) || dist[w] != usize::MAX {
                    continue;
                }
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
        sizes.push(dist[bond.b] + 1);
    }
    sizes
}

/// `max(0, largest ring − 6)`, with rings taken as the smallest cycle through each ring bond.
pub fn long_cycle_penalty(g: &MolGraph) -> f64 {
    let largest = ring_sizes(g).into_iter().max().unwrap_or(0);
    largest.saturating_sub(6) as f64
}

/// Synthetic-complexity stand-in: `3 · (2·fused + branched) / atoms`, where
/// fused atoms carry at least three ring bonds and branched atoms are the
/// remaining atoms of degree three or more.
pub fn complexity_penalty(g: &MolGraph) -> f64 {
    let n = g.atom_count();
    if n == 0 {
        return 0.0;
    }
    let bridges = g.bridges();
    let mut ring_bonds = vec![0usize; n];
    for bond in g.bonds() {
        if !bridges.contains(&(bond.a, bond.b)) {
            ring_bonds[bond.a] += 1;
            ring_bonds[bond.b] += 1;
        }
    }
    let mut score = 0usize;
    for a in 0..n {
        if ring_bonds[a] >= 3 {
            score += 2;
        } else if g.degree(a) >= 3 {
            score += 1;
        }
    }
    3.0 * score as f64 / n as f64
}

/// `logp_proxy − complexity_penalty − long_cycle_penalty`.
pub fn penalized_logp(g: &MolGraph) -> f64 {
    logp_proxy(g) - complexity_penalty(g) - long_cycle_penalty(g)
}

/// [`penalized_logp`] as a critic that rejects invalid molecules.
#[derive(Debug, Clone, Copy, Default)]
pub struct PenalizedLogp {
    pub valency: ValencyTable,
}

impl Critic for PenalizedLogp {
    fn name(&self) -> &str {
        "penalized_logp"
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        if g.is_empty() || !g.check_validity(&self.valency).valid {
            return Err(CriticError::Invalid("valency or connectivity violated"));
        }
        Ok(penalized_logp(g))
    }
}
