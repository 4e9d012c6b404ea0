//! Assignment of alternating single/double bonds to aromatic systems.

use alloc::vec;
use alloc::vec::Vec;

use super::{err, BondSpec, ParsedAtom, SmilesError, SmilesErrorKind};
use crate::element::{BondOrder, Element};
use crate::graph::MolGraph;

/// Graph whose aromatic ring bonds still await an order.
#[derive(Debug, Clone)]
pub struct AromaticGraph {
    pub atoms: Vec<Element>,
    pub aromatic: Vec<bool>,
    /// Hydrogens written explicitly in brackets (0 otherwise).
    pub hydrogens: Vec<u8>,
    /// `None` marks an aromatic bond.
    pub bonds: Vec<(usize, usize, Option<BondOrder>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no alternating bond assignment exists for the aromatic system")]
pub struct Unkekulizable {
    /// An aromatic atom that could not receive a double bond.
    pub atom: Option<usize>,
}

impl AromaticGraph {
    /// Decides which parsed bonds are aromatic: unmarked or `:` bonds between
    /// two aromatic atoms, provided the bond lies on a ring.
    pub(crate) fn resolve(
        atoms: &[ParsedAtom],
        bonds: &[(usize, usize, BondSpec)],
    ) -> Result<AromaticGraph, SmilesError> {
        let mut skeleton = MolGraph::with_atoms(&atoms.iter().map(|a| a.element).collect::<Vec<_>>());
        for &(a, b, _) in bonds {
            skeleton
                .add_bond(a, b, BondOrder::Single)
                .map_err(|_| err(atoms[b].position, SmilesErrorKind::InvalidRingClosure))?;
        }
        let bridges = skeleton.bridges();
        let resolved = bonds
            .iter()
            .map(|&(a, b, spec)| {
                let both = atoms[a].aromatic && atoms[b].aromatic;
                let on_ring = bridges.binary_search(&(a.min(b), a.max(b))).is_err();
                let order = match spec {
                    BondSpec::Order(o) => Some(o),
                    BondSpec::Aromatic | BondSpec::Implicit if both && on_ring => None,
                    _ => Some(BondOrder::Single),
                };
                (a, b, order)
            })
            .collect();
        Ok(AromaticGraph {
            atoms: atoms.iter().map(|a| a.element).collect(),
            aromatic: atoms.iter().map(|a| a.aromatic).collect(),
            hydrogens: atoms.iter().map(|a| a.hydrogens.unwrap_or(0)).collect(),
            bonds: resolved,
        })
    }

    /// Whether aromatic atom `i` must take one double bond inside its ring system.
    fn needs_double(&self, i: usize) -> bool {
        if !self.aromatic[i] {
            return false;
        }
        let mut sigma = self.hydrogens[i] as u32;
        let mut has_multiple = false;
        for &(a, b, order) in &self.bonds {
            if a != i && b != i {
                continue;
            }
            match order {
                Some(o) => {
                    sigma += o.order() as u32;
                    has_multiple |= o != BondOrder::Single;
                }
                None => sigma += 1,
            }
        }
        if has_multiple {
            return false;
        }
        match self.atoms[i] {
            Element::C => true,
            Element::N | Element::P => sigma == 2,
            Element::O | Element::S => sigma == 1,
            _ => false,
        }
    }
}

/// Resolves aromatic bonds by a perfect matching over the atoms that need a
/// double bond. Backtracks, always extending the most constrained atom
/// first; ties go to the lowest atom index.
pub fn kekulize(g: &AromaticGraph) -> Result<MolGraph, Unkekulizable> {
    let n = g.atoms.len();
    let needs: Vec<bool> = (0..n).map(|i| g.needs_double(i)).collect();
    let mut pi_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b, order) in &g.bonds {
        if order.is_none() && needs[a] && needs[b] {
            pi_adj[a].push(b);
            pi_adj[b].push(a);
        }
    }
    for adj in &mut pi_adj {
        adj.sort_unstable();
    }
    let mut mate: Vec<Option<usize>> = vec![None; n];
    if !match_all(&pi_adj, &needs, &mut mate) {
        return Err(Unkekulizable {
            atom: (0..n).find(|&i| needs[i] && mate[i].is_none()),
        });
    }
    let mut out = MolGraph::with_atoms(&g.atoms);
    for &(a, b, order) in &g.bonds {
        let order = order.unwrap_or(if mate[a] == Some(b) {
            BondOrder::Double
        } else {
            BondOrder::Single
        });
        out.add_bond(a, b, order).expect("bonds validated by resolve");
    }
    Ok(out)
}

fn match_all(adj: &[Vec<usize>], needs: &[bool], mate: &mut [Option<usize>]) -> bool {
    let free = |v: usize, mate: &[Option<usize>]| needs[v] && mate[v].is_none();
    // most constrained unmatched atom
    let mut pick: Option<(usize, usize)> = None;
    for u in 0..adj.len() {
        if !free(u, mate) {
            continue;
        }
        let options = adj[u].iter().filter(|&&v| free(v, mate)).count();
        if pick.is_none_or(|(_, best)| options < best) {
            pick = Some((u, options));
        }
    }
    let Some((u, options)) = pick else {
        return true;
    };
    if options == 0 {
        return false;
    }
    for &v in &adj[u] {
        if !free(v, mate) {
            continue;
        }
        mate[u] = Some(v);
        mate[v] = Some(u);
        if match_all(adj, needs, mate) {
            return true;
        }
        mate[u] = None;
        mate[v] = None;
    }
    false
}
