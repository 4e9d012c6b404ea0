//! Breadth-first sequence representation of molecular graphs.
//!
//! A molecule with `n` atoms becomes an atom-type sequence plus `n - 1` edge
//! rows. Row `i` (for atom `i >= 1`) holds `window` categories: entry `d - 1`
//! is the bond category between atom `i` and atom `i - d` (0 = no bond).
//! Entries with `d > i` are padding and always 0.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::canon::canonical_form;
use crate::element::{BondOrder, Element, ValencyTable};
use crate::graph::MolGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    /// Edge-prediction window `M`.
    pub window: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            window: 12,
            min_atoms: 10,
            max_atoms: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("invalid codec config: {0}")]
    Config(&'static str),
    #[error("graph is not connected")]
    Disconnected,
    #[error("root atom {0} is not a carbon")]
    NonCarbonRoot(usize),
    #[error("root atom {0} out of range")]
    RootOutOfRange(usize),
    #[error("bond {a}-{b} spans {distance} positions, beyond window {window}")]
    BandwidthOverflow {
        a: usize,
        b: usize,
        distance: usize,
        window: usize,
    },
    #[error("molecule has {atoms} atoms, more than {max}")]
    TooManyAtoms { atoms: usize, max: usize },
    #[error("no carbon root keeps every bond within the window")]
    NoEncodableRoot,
    #[error("malformed sequence: {0}")]
    Malformed(&'static str),
    #[error("valency exceeded on atoms {0:?}")]
    ValencyViolation(Vec<usize>),
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.window < 1 || self.window >= self.max_atoms {
            return Err(CodecError::Config("window must satisfy 1 <= M < max_atoms"));
        }
        if self.min_atoms > self.max_atoms {
            return Err(CodecError::Config("min_atoms must not exceed max_atoms"));
        }
        if self.window > u8::MAX as usize || self.max_atoms > u8::MAX as usize {
            return Err(CodecError::Config("window and max_atoms must fit in a byte"));
        }
        Ok(())
    }
}

/// Atom types and windowed edge rows of one molecule under a BFS ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BfsSequence {
    window: usize,
    atom_types: Vec<Element>,
    /// `(atom_types.len() - 1) * window` categories, row-major.
    edges: Vec<u8>,
}

impl BfsSequence {
    /// Builds a sequence, checking categories and the padding contract.
    pub fn new(window: usize, atom_types: Vec<Element>, edges: Vec<u8>) -> Result<Self, CodecError> {
        if window == 0 {
            return Err(CodecError::Malformed("window must be positive"));
        }
        if atom_types.is_empty() {
            return Err(CodecError::Malformed("empty sequence"));
        }
        if edges.len() != (atom_types.len() - 1) * window {
            return Err(CodecError::Malformed("edge rows do not match atom count"));
        }
        for (r, row) in edges.chunks(window).enumerate() {
            let i = r + 1;
            for (k, &cat) in row.iter().enumerate() {
                if cat > 3 {
                    return Err(CodecError::Malformed("edge category above 3"));
                }
                if k + 1 > i && cat != 0 {
                    return Err(CodecError::Malformed("nonzero padding entry"));
                }
            }
        }
        Ok(BfsSequence {
            window,
            atom_types,
            edges,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.atom_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atom_types.is_empty()
    }

    pub fn atom_types(&self) -> &[Element] {
        &self.atom_types
    }

    /// Edge categories of atom `i >= 1`; `row(i)[d - 1]` links to atom `i - d`.
    pub fn row(&self, i: usize) -> &[u8] {
        assert!(i >= 1 && i < self.atom_types.len(), "row index out of range");
        &self.edges[(i - 1) * self.window..i * self.window]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.edges.chunks(self.window)
    }

    pub fn edges_flat(&self) -> &[u8] {
        &self.edges
    }
}

/// Breadth-first visit order from `root`, neighbors in ascending index order.
/// `order[k]` is the atom placed at position `k`.
pub fn bfs_order(g: &MolGraph, root: usize) -> Result<Vec<usize>, CodecError> {
    let n = g.atom_count();
    if root >= n {
        return Err(CodecError::RootOutOfRange(root));
    }
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    seen[root] = true;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(w, _) in g.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    if order.len() != n {
        return Err(CodecError::Disconnected);
    }
    Ok(order)
}

/// Largest position distance spanned by a bond under `order`.
pub fn bandwidth(g: &MolGraph, order: &[usize]) -> usize {
    let mut position = vec![0usize; g.atom_count()];
    for (k, &v) in order.iter().enumerate() {
        position[v] = k;
    }
    g.bonds()
        .map(|b| position[b.a].abs_diff(position[b.b]))
        .max()
        .unwrap_or(0)
}

/// Encodes `g` by BFS from `root`.
pub fn encode(g: &MolGraph, cfg: &CodecConfig, root: usize) -> Result<BfsSequence, CodecError> {
    if root >= g.atom_count() {
        return Err(CodecError::RootOutOfRange(root));
    }
    if g.element(root) != Element::C {
        return Err(CodecError::NonCarbonRoot(root));
    }
    if g.atom_count() > cfg.max_atoms {
        return Err(CodecError::TooManyAtoms {
            atoms: g.atom_count(),
            max: cfg.max_atoms,
        });
    }
    let order = bfs_order(g, root)?;
    let n = order.len();
    let mut position = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        position[v] = k;
    }
    let m = cfg.window;
    let mut edges = vec![0u8; (n - 1) * m];
    for bond in g.bonds() {
        let (pa, pb) = (position[bond.a], position[bond.b]);
        let (later, earlier) = if pa > pb { (pa, pb) } else { (pb, pa) };
        let distance = later - earlier;
        if distance > m {
            return Err(CodecError::BandwidthOverflow {
                a: bond.a,
                b: bond.b,
                distance,
                window: m,
            });
        }
        edges[(later - 1) * m + distance - 1] = bond.order.order();
    }
    Ok(BfsSequence {
        window: m,
        atom_types: order.iter().map(|&v| g.element(v)).collect(),
        edges,
    })
}

/// Carbons whose BFS ordering keeps every bond within the window, in
/// canonical-rank order.
pub fn encodable_roots(g: &MolGraph, cfg: &CodecConfig) -> Vec<usize> {
    let form = canonical_form(g);
    let mut carbons: Vec<usize> = (0..g.atom_count())
        .filter(|&v| g.element(v) == Element::C)
        .collect();
    carbons.sort_by_key(|&v| form.rank[v]);
    carbons
        .into_iter()
        .filter(|&root| match bfs_order(g, root) {
            Ok(order) => bandwidth(g, &order) <= cfg.window,
            Err(_) => false,
        })
        .collect()
}

/// Encodes from the lowest-canonical-rank carbon whose BFS fits the window.
pub fn encode_default(g: &MolGraph, cfg: &CodecConfig) -> Result<BfsSequence, CodecError> {
    if !g.is_connected() {
        return Err(CodecError::Disconnected);
    }
    let form = canonical_form(g);
    let mut carbons: Vec<usize> = (0..g.atom_count())
        .filter(|&v| g.element(v) == Element::C)
        .collect();
    carbons.sort_by_key(|&v| form.rank[v]);
    let mut last = CodecError::NoEncodableRoot;
    for root in carbons {
        match encode(g, cfg, root) {
            Ok(seq) => return Ok(seq),
            Err(e @ CodecError::BandwidthOverflow { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(match last {
        CodecError::BandwidthOverflow { .. } => CodecError::NoEncodableRoot,
        e => e,
    })
}

/// A bond that pushed an endpoint past its valence during decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeViolation {
    /// Atom whose row carried the bond.
    pub atom: usize,
    /// Earlier endpoint.
    pub partner: usize,
    pub order: BondOrder,
}

impl DecodeViolation {
    pub fn atoms(&self) -> [usize; 2] {
        [self.partner, self.atom]
    }
}

/// Rebuilds the graph, recording every bond that exceeded a valence instead
/// of failing. Stops at the first all-zero row.
pub fn decode_lenient(seq: &BfsSequence, vt: &ValencyTable) -> (MolGraph, Vec<DecodeViolation>) {
    let mut g = MolGraph::new();
    let mut violations = Vec::new();
    g.add_atom(seq.atom_types[0]);
    for i in 1..seq.len() {
        let row = seq.row(i);
        if row.iter().all(|&c| c == 0) {
            break;
        }
        let atom = g.add_atom(seq.atom_types[i]);
        for (k, &cat) in row.iter().enumerate() {
            let Some(order) = BondOrder::from_category(cat) else {
                continue;
            };
            let partner = atom - (k + 1);
            let fits = g
                .can_add_bond(atom, partner, order, vt)
                .expect("sequence rows link distinct in-range atoms once");
            g.add_bond(atom, partner, order).expect("checked above");
            if !fits {
                violations.push(DecodeViolation {
                    atom,
                    partner,
                    order,
                });
            }
        }
    }
    (g, violations)
}

/// Rebuilds the graph; any valency violation is an error naming the atoms involved.
pub fn decode(seq: &BfsSequence, vt: &ValencyTable) -> Result<MolGraph, CodecError> {
    let (g, violations) = decode_lenient(seq, vt);
    if violations.is_empty() {
        Ok(g)
    } else {
        let mut atoms: Vec<usize> = violations.iter().flat_map(|v| v.atoms()).collect();
        atoms.sort_unstable();
        atoms.dedup();
        Err(CodecError::ValencyViolation(atoms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::canonical_key;
    use crate::element::BondOrder::*;
    use crate::element::Element::*;
    use crate::smiles::parse;

    fn cfg() -> CodecConfig {
        CodecConfig::default()
    }

    #[test]
    fn config_bounds() {
        assert!(cfg().validate().is_ok());
        let bad = CodecConfig { window: 50, ..cfg() };
        assert!(bad.validate().is_err());
        let bad = CodecConfig { min_atoms: 60, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bfs_examples() {
        // path a-b-c rooted at b
        let path = MolGraph::from_parts(&[C, C, C], &[(0, 1, Single), (1, 2, Single)]).unwrap();
        assert_eq!(bfs_order(&path, 1).unwrap(), vec![1, 0, 2]);
        assert_eq!(bandwidth(&path, &bfs_order(&path, 0).unwrap()), 1);
        let star = MolGraph::from_parts(&[C, C, C, C, C], &[(2, 4, Single), (2, 0, Single), (2, 1, Single), (2, 3, Single)])
            .unwrap();
        assert_eq!(bfs_order(&star, 2).unwrap(), vec![2, 0, 1, 3, 4]);
        assert_eq!(
            bfs_order(&MolGraph::with_atoms(&[C, C]), 0),
            Err(CodecError::Disconnected)
        );
    }

    #[test]
    fn encode_examples() {
        let chain = parse("CCC").unwrap();
        let seq = encode(&chain, &cfg(), 0).unwrap();
        assert_eq!(seq.atom_types(), &[C, C, C]);
        let mut expected = vec![0u8; 12];
        expected[0] = 1;
        assert_eq!(seq.row(1), &expected[..]);
        assert_eq!(seq.row(2), &expected[..]);

        let carbonyl = parse("C=O").unwrap();
        let seq = encode(&carbonyl, &cfg(), 0).unwrap();
        assert_eq!(seq.atom_types(), &[C, O]);
        assert_eq!(seq.row(1)[0], 2);
        assert_eq!(encode(&carbonyl, &cfg(), 1), Err(CodecError::NonCarbonRoot(1)));
    }

    #[test]
    fn benzene_closure_row() {
        let benzene = parse("C1=CC=CC=C1").unwrap();
        for root in 0..6 {
            let order = bfs_order(&benzene, root).unwrap();
            // layers: root, two neighbors, two next, far vertex
            assert_eq!(bandwidth(&benzene, &order), 2);
            let seq = encode(&benzene, &cfg(), root).unwrap();
            let nonzero_per_row: Vec<usize> = seq
                .rows()
                .map(|r| r.iter().filter(|&&c| c != 0).count())
                .collect();
            // the far vertex closes the ring with two bonds
            assert_eq!(nonzero_per_row, vec![1, 1, 1, 1, 2]);
            assert_eq!(canonical_key(&decode(&seq, &ValencyTable::default()).unwrap()), canonical_key(&benzene));
        }
    }

    #[test]
    fn bandwidth_overflow_names_edge() {
        let ring = parse("C1CCCCCCCC1").unwrap();
        let tiny = CodecConfig { window: 1, ..cfg() };
        assert!(matches!(
            encode(&ring, &tiny, 0),
            Err(CodecError::BandwidthOverflow { distance: 2, window: 1, .. })
        ));
        assert_eq!(encode_default(&ring, &tiny), Err(CodecError::NoEncodableRoot));
    }

    #[test]
    fn decode_terminal_and_violations() {
        let vt = ValencyTable::default();
        let seq = BfsSequence::new(3, vec![C, O], vec![0, 0, 0]).unwrap();
        assert_eq!(decode(&seq, &vt).unwrap().atom_count(), 1);

        // O-O double then a third atom triple-bonded to O
        let seq = BfsSequence::new(2, vec![C, O, C], vec![2, 0, 3, 0]).unwrap();
        assert_eq!(decode(&seq, &vt), Err(CodecError::ValencyViolation(vec![1, 2])));
        let (g, v) = decode_lenient(&seq, &vt);
        assert_eq!(g.atom_count(), 3);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].atoms(), [1, 2]);
    }

    #[test]
    fn malformed_sequences() {
        assert!(BfsSequence::new(2, vec![C, C], vec![1, 1]).is_err()); // padding
        assert!(BfsSequence::new(2, vec![C, C], vec![4, 0]).is_err());
        assert!(BfsSequence::new(2, vec![C, C], vec![1]).is_err());
        assert!(BfsSequence::new(2, vec![], vec![]).is_err());
    }
}
