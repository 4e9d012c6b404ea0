//! Molecular graph with valency accounting.

use alloc::vec;
use alloc::vec::Vec;

use crate::element::{BondOrder, Element, ValencyTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("atom index {index} out of range for graph with {len} atoms")]
    AtomOutOfRange { index: usize, len: usize },
    #[error("self-loop on atom {0}")]
    SelfLoop(usize),
    #[error("atoms {0} and {1} are already bonded")]
    DuplicateBond(usize, usize),
    #[error("valency exceeded on atoms {0:?}")]
    ValencyViolation(Vec<usize>),
    #[error("graph is empty or not connected")]
    Disconnected,
}

/// An undirected bond between atoms `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

/// Heavy-atom molecular graph. Hydrogens are implicit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MolGraph {
    atoms: Vec<Element>,
    // sorted by neighbor index
    adjacency: Vec<Vec<(usize, BondOrder)>>,
    bond_count: usize,
}

/// Outcome of [`MolGraph::check_validity`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub valid: bool,
    pub connected: bool,
    /// Atoms whose bond-order sum exceeds their table valence, ascending.
    pub violations: Vec<usize>,
}

impl MolGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_atoms(atoms: &[Element]) -> Self {
        MolGraph {
            atoms: atoms.to_vec(),
            adjacency: vec![Vec::new(); atoms.len()],
            bond_count: 0,
        }
    }

    /// Builds a graph from atoms and `(i, j, order)` triples.
    pub fn from_parts(
        atoms: &[Element],
        bonds: &[(usize, usize, BondOrder)],
    ) -> Result<Self, GraphError> {
        let mut g = Self::with_atoms(atoms);
        for &(i, j, order) in bonds {
            g.add_bond(i, j, order)?;
        }
        Ok(g)
    }

    pub fn add_atom(&mut self, element: Element) -> usize {
        self.atoms.push(element);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    /// Inserts a bond without valency checks.
    pub fn add_bond(&mut self, i: usize, j: usize, order: BondOrder) -> Result<(), GraphError> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        let pos = match self.adjacency[i].binary_search_by_key(&j, |&(n, _)| n) {
            Ok(_) => return Err(GraphError::DuplicateBond(i.min(j), i.max(j))),
            Err(pos) => pos,
        };
        self.adjacency[i].insert(pos, (j, order));
        let pos = self.adjacency[j]
            .binary_search_by_key(&i, |&(n, _)| n)
            .unwrap_err();
        self.adjacency[j].insert(pos, (i, order));
        self.bond_count += 1;
        Ok(())
    }

    #[inline]
    fn check_index(&self, index: usize) -> Result<(), GraphError> {
        if index < self.atoms.len() {
            Ok(())
        } else {
            Err(GraphError::AtomOutOfRange {
                index,
                len: self.atoms.len(),
            })
        }
    }

    #[inline]
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    #[inline]
    pub fn bond_count(&self) -> usize {
        self.bond_count
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Element] {
        &self.atoms
    }

    #[inline]
    pub fn element(&self, atom: usize) -> Element {
        self.atoms[atom]
    }

    /// Neighbors of `atom` with bond orders, ascending by neighbor index.
    #[inline]
    pub fn neighbors(&self, atom: usize) -> &[(usize, BondOrder)] {
        &self.adjacency[atom]
    }

    #[inline]
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, i: usize, j: usize) -> Option<BondOrder> {
        let adj = self.adjacency.get(i)?;
        adj.binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|pos| adj[pos].1)
    }

    /// All bonds with `a < b`, sorted.
    pub fn bonds(&self) -> impl Iterator<Item = Bond> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, adj)| {
            adj.iter()
                .filter(move |&&(b, _)| b > a)
                .map(move |&(b, order)| Bond { a, b, order })
        })
    }

    /// Sum of bond orders incident to `atom`.
    pub fn valence_used(&self, atom: usize) -> Result<u32, GraphError> {
        self.check_index(atom)?;
        Ok(self.valence_used_unchecked(atom))
    }

    #[inline]
    pub(crate) fn valence_used_unchecked(&self, atom: usize) -> u32 {
        self.adjacency[atom]
            .iter()
            .map(|&(_, o)| o.order() as u32)
            .sum()
    }

    /// Whether a bond of order `order` between `i` and `j` keeps both atoms
    /// within their table valence.
    pub fn can_add_bond(
        &self,
        i: usize,
        j: usize,
        order: BondOrder,
        vt: &ValencyTable,
    ) -> Result<bool, GraphError> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if self.bond_between(i, j).is_some() {
            return Err(GraphError::DuplicateBond(i.min(j), i.max(j)));
        }
        let k = order.order() as u32;
        Ok(self.valence_used_unchecked(i) + k <= vt.max_valence(self.atoms[i]) as u32
            && self.valence_used_unchecked(j) + k <= vt.max_valence(self.atoms[j]) as u32)
    }

    /// Atoms carrying more total bond order than the table allows.
    pub fn valency_violations(&self, vt: &ValencyTable) -> Vec<usize> {
        (0..self.atoms.len())
            .filter(|&a| self.valence_used_unchecked(a) > vt.max_valence(self.atoms[a]) as u32)
            .collect()
    }

    /// Hydrogens needed to fill each atom up to its table valence.
    pub fn implicit_hydrogens(&self, vt: &ValencyTable) -> Result<Vec<u32>, GraphError> {
        let violations = self.valency_violations(vt);
        if !violations.is_empty() {
            return Err(GraphError::ValencyViolation(violations));
        }
        Ok((0..self.atoms.len())
            .map(|a| vt.max_valence(self.atoms[a]) as u32 - self.valence_used_unchecked(a))
            .collect())
    }

    /// Connected-component label per atom plus the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.atoms.len();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adjacency[v] {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        !self.atoms.is_empty() && self.components().1 == 1
    }

    /// Validity as a molecule: nonempty, connected, no atom over valence.
    pub fn check_validity(&self, vt: &ValencyTable) -> ValidityReport {
        let connected = self.is_connected();
        let violations = self.valency_violations(vt);
        ValidityReport {
            valid: connected && violations.is_empty(),
            connected,
            violations,
        }
    }

    /// Cycle rank `|E| - |V| + components`.
    pub fn cycle_rank(&self) -> usize {
        let (_, comps) = self.components();
        self.bond_count + comps - self.atoms.len()
    }

    /// Returns the graph with atom `i` moved to position `perm[i]`.
    ///
    /// # Panics
    /// If `perm` is not a permutation of `0..atom_count()`.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        let n = self.atoms.len();
        assert_eq!(perm.len(), n, "permutation length mismatch");
        let mut seen = vec![false; n];
        let mut atoms = vec![Element::C; n];
        for (i, &p) in perm.iter().enumerate() {
            assert!(p < n && !seen[p], "not a permutation");
            seen[p] = true;
            atoms[p] = self.atoms[i];
        }
        let mut g = MolGraph::with_atoms(&atoms);
        for bond in self.bonds() {
            g.add_bond(perm[bond.a], perm[bond.b], bond.order)
                .expect("permutation preserves simple graph");
        }
        g
    }

    /// Whether every atom lies on at least one cycle, per atom.
    pub fn ring_atoms(&self) -> Vec<bool> {
        let bridges = self.bridges();
        let mut in_ring = vec![false; self.atoms.len()];
        for bond in self.bonds() {
            if !bridges.contains(&(bond.a, bond.b)) {
                in_ring[bond.a] = true;
                in_ring[bond.b] = true;
            }
        }
        in_ring
    }

    /// Bridges as `(a, b)` with `a < b`, sorted.
    pub fn bridges(&self) -> Vec<(usize, usize)> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut out = Vec::new();
        let mut timer = 0;
        // iterative DFS: (vertex, parent, next neighbor slot)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root, usize::MAX, 0));
            while let Some(&mut (v, parent, ref mut slot)) = stack.last_mut() {
                if *slot < self.adjacency[v].len() {
                    let w = self.adjacency[v][*slot].0;
                    *slot += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, v, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] > disc[parent] {
                            out.push((parent.min(v), parent.max(v)));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BondOrder::*;
    use Element::*;

    fn kekule_benzene() -> MolGraph {
        MolGraph::from_parts(
            &[C; 6],
            &[
                (0, 1, Single),
                (1, 2, Double),
                (2, 3, Single),
                (3, 4, Double),
                (4, 5, Single),
                (5, 0, Double),
            ],
        )
        .unwrap()
    }

    #[test]
    fn valence_used_examples() {
        let methane = MolGraph::with_atoms(&[C]);
        assert_eq!(methane.valence_used(0), Ok(0));
        let ethene = MolGraph::from_parts(&[C, C], &[(0, 1, Double)]).unwrap();
        assert_eq!(ethene.valence_used(0), Ok(2));
        // C-C(-C)=C
        let g = MolGraph::from_parts(&[C, C, C, C], &[(0, 1, Single), (1, 2, Single), (1, 3, Double)])
            .unwrap();
        assert_eq!(g.valence_used(1), Ok(4));
        assert_eq!(
            g.valence_used(9),
            Err(GraphError::AtomOutOfRange { index: 9, len: 4 })
        );
    }

    #[test]
    fn can_add_bond_examples() {
        let vt = ValencyTable::default();
        let star = MolGraph::from_parts(
            &[C, C, C, C, C, C],
            &[(0, 1, Single), (0, 2, Single), (0, 3, Single), (0, 4, Single)],
        )
        .unwrap();
        for order in BondOrder::ALL {
            assert_eq!(star.can_add_bond(0, 5, order, &vt), Ok(false));
        }
        let two = MolGraph::with_atoms(&[C, C]);
        assert_eq!(two.can_add_bond(0, 1, Triple, &vt), Ok(true));
        let carbonyl = MolGraph::from_parts(&[C, O, C], &[(0, 1, Double)]).unwrap();
        assert_eq!(carbonyl.can_add_bond(1, 2, Single, &vt), Ok(false));
        assert_eq!(
            carbonyl.can_add_bond(0, 1, Single, &vt),
            Err(GraphError::DuplicateBond(0, 1))
        );
    }

    #[test]
    fn implicit_hydrogen_examples() {
        let vt = ValencyTable::default();
        assert_eq!(MolGraph::with_atoms(&[C]).implicit_hydrogens(&vt), Ok(vec![4]));
        let co = MolGraph::from_parts(&[C, O], &[(0, 1, Double)]).unwrap();
        assert_eq!(co.implicit_hydrogens(&vt), Ok(vec![2, 0]));
        assert_eq!(kekule_benzene().implicit_hydrogens(&vt), Ok(vec![1; 6]));
    }

    #[test]
    fn validity_examples() {
        let vt = ValencyTable::default();
        let mut g = MolGraph::with_atoms(&[C; 6]);
        for leaf in 1..6 {
            g.add_bond(0, leaf, Single).unwrap();
        }
        let report = g.check_validity(&vt);
        assert!(!report.valid);
        assert!(report.connected);
        assert_eq!(report.violations, vec![0]);
        assert!(matches!(
            g.implicit_hydrogens(&vt),
            Err(GraphError::ValencyViolation(v)) if v == vec![0]
        ));

        let report = MolGraph::with_atoms(&[C, C]).check_validity(&vt);
        assert!(!report.valid && !report.connected && report.violations.is_empty());

        assert!(kekule_benzene().check_validity(&vt).valid);
        assert!(!MolGraph::new().check_validity(&vt).valid);
    }

    #[test]
    fn ring_detection() {
        // toluene-like: ring plus one methyl
        let mut g = kekule_benzene();
        let m = g.add_atom(C);
        g.add_bond(0, m, Single).unwrap();
        assert_eq!(g.bridges(), vec![(0, 6)]);
        assert_eq!(g.ring_atoms(), vec![true, true, true, true, true, true, false]);
        assert_eq!(g.cycle_rank(), 1);
    }

    #[test]
    fn structural_errors() {
        let mut g = MolGraph::with_atoms(&[C, C]);
        assert_eq!(g.add_bond(0, 0, Single), Err(GraphError::SelfLoop(0)));
        g.add_bond(1, 0, Single).unwrap();
        assert_eq!(g.add_bond(0, 1, Double), Err(GraphError::DuplicateBond(0, 1)));
        assert_eq!(g.bonds().next(), Some(Bond { a: 0, b: 1, order: Single }));
    }
}
