//! Canonical labeling of molecular graphs.
//!
//! Colors start from element labels and are refined by neighbor multisets
//! (neighbor color, bond order) until the partition is equitable. Ties are
//! broken by individualizing each vertex of the first non-singleton cell in
//! turn; every discrete leaf of that search yields a relabeled graph, and the
//! lexicographically smallest serialization is the canonical form.
//! Automorphisms found along the way (two leaves with identical
//! serializations) prune sibling branches that lie in the same orbit.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::MolGraph;

/// Isomorphism-invariant identifier: equal keys iff the graphs are isomorphic
/// respecting element labels and bond orders.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(Vec<u8>);

impl CanonicalKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        CanonicalKey(bytes)
    }

    /// 64-bit FNV-1a digest of the key bytes.
    pub fn digest(&self) -> u64 {
        fnv1a64(&self.0)
    }
}

impl fmt::Debug for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalKey({:016x})", self.digest())
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Canonical key together with the canonical position of every atom.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub key: CanonicalKey,
    /// `rank[v]` is atom `v`'s position in the canonical ordering.
    pub rank: Vec<usize>,
}

pub fn canonical_key(g: &MolGraph) -> CanonicalKey {
    canonical_form(g).key
}

pub fn canonical_form(g: &MolGraph) -> CanonicalForm {
    let n = g.atom_count();
    let initial: Vec<usize> = {
        // cell-start convention: color = index of the first vertex of the cell
        // in the sorted order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| g.element(v));
        let mut colors = vec![0; n];
        for (pos, &v) in order.iter().enumerate() {
            colors[v] = if pos > 0 && g.element(order[pos - 1]) == g.element(v) {
                colors[order[pos - 1]]
            } else {
                pos
            };
        }
        colors
    };
    let mut search = Search {
        g,
        best: None,
        automorphisms: Vec::new(),
    };
    let colors = refine(g, initial);
    let mut prefix = Vec::new();
    search.explore(colors, &mut prefix);
    let (bytes, rank) = search.best.expect("search visits at least one leaf");
    CanonicalForm {
        key: CanonicalKey(bytes),
        rank,
    }
}

fn cell_count(colors: &[usize]) -> usize {
    let mut seen: Vec<usize> = colors.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Refines `colors` to the coarsest equitable partition finer than it.
fn refine(g: &MolGraph, mut colors: Vec<usize>) -> Vec<usize> {
    let n = colors.len();
    let mut cells = cell_count(&colors);
    let mut signatures: Vec<Vec<(usize, u8)>> = vec![Vec::new(); n];
    let mut order: Vec<usize> = (0..n).collect();
    while cells < n {
        for v in 0..n {
            let sig = &mut signatures[v];
            sig.clear();
            sig.extend(g.neighbors(v).iter().map(|&(w, o)| (colors[w], o.order())));
            sig.sort_unstable();
        }
        order.sort_by(|&a, &b| {
            colors[a]
                .cmp(&colors[b])
                .then_with(|| signatures[a].cmp(&signatures[b]))
        });
        let mut next = vec![0; n];
        for pos in 0..n {
            let v = order[pos];
            next[v] = if pos > 0 {
                let u = order[pos - 1];
                if colors[u] == colors[v] && signatures[u] == signatures[v] {
                    next[u]
                } else {
                    pos
                }
            } else {
                0
            };
        }
        let refined = cell_count(&next);
        colors = next;
        if refined == cells {
            break;
        }
        cells = refined;
    }
    colors
}

struct Search<'a> {
    g: &'a MolGraph,
    best: Option<(Vec<u8>, Vec<usize>)>,
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn explore(&mut self, colors: Vec<usize>, prefix: &mut Vec<usize>) {
        let n = colors.len();
        // first non-singleton cell
        let mut counts = vec![0usize; n];
        for &c in &colors {
            counts[c] += 1;
        }
        let Some(target) = (0..n).find(|&c| counts[c] > 1) else {
            self.leaf(&colors);
            return;
        };
        let cell: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
        let mut explored: Vec<usize> = Vec::new();
        for &v in &cell {
            if !explored.is_empty() && self.same_orbit(prefix, &explored, v) {
                continue;
            }
            let mut child = colors.clone();
            for &u in &cell {
                if u != v {
                    child[u] = target + 1;
                }
            }
            let child = refine(self.g, child);
            prefix.push(v);
            self.explore(child, prefix);
            prefix.pop();
            explored.push(v);
        }
    }

    /// Whether `v` shares an orbit with an explored vertex under the group
    /// generated by known automorphisms that fix `prefix` pointwise.
    fn same_orbit(&self, prefix: &[usize], explored: &[usize], v: usize) -> bool {
        let n = self.g.atom_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut any = false;
        for sigma in &self.automorphisms {
            if prefix.iter().any(|&p| sigma[p] != p) {
                continue;
            }
            any = true;
            for x in 0..n {
                let (a, b) = (find(&mut parent, x), find(&mut parent, sigma[x]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        if !any {
            return false;
        }
        let root = find(&mut parent, v);
        explored.iter().any(|&e| find(&mut parent, e) == root)
    }

    fn leaf(&mut self, rank: &[usize]) {
        let bytes = serialize(self.g, rank);
        match &self.best {
            None => self.best = Some((bytes, rank.to_vec())),
            Some((best_bytes, best_rank)) => match bytes.cmp(best_bytes) {
                core::cmp::Ordering::Less => self.best = Some((bytes, rank.to_vec())),
                core::cmp::Ordering::Equal => {
                    let n = rank.len();
                    let mut at_position = vec![0; n];
                    for (v, &r) in best_rank.iter().enumerate() {
                        at_position[r] = v;
                    }
                    let sigma: Vec<usize> = (0..n).map(|v| at_position[rank[v]]).collect();
                    if sigma.iter().enumerate().any(|(i, &s)| i != s) {
                        self.automorphisms.push(sigma);
                    }
                }
                core::cmp::Ordering::Greater => {}
            },
        }
    }
}

/// Fixed-width serialization of `g` relabeled by `rank`.
fn serialize(g: &MolGraph, rank: &[usize]) -> Vec<u8> {
    let n = g.atom_count();
    let mut atoms = vec![0u8; n];
    for v in 0..n {
        atoms[rank[v]] = g.element(v) as u8;
    }
    let mut edges: Vec<(u16, u16, u8)> = g
        .bonds()
        .map(|b| {
            let (x, y) = (rank[b.a] as u16, rank[b.b] as u16);
            (x.min(y), x.max(y), b.order.order())
        })
        .collect();
    edges.sort_unstable();
    let mut out = Vec::with_capacity(4 + n + 5 * edges.len());
    out.extend_from_slice(&(n as u16).to_be_bytes());
    out.extend_from_slice(&(edges.len() as u16).to_be_bytes());
    out.extend_from_slice(&atoms);
    for (x, y, o) in edges {
        out.extend_from_slice(&x.to_be_bytes());
        out.extend_from_slice(&y.to_be_bytes());
        out.push(o);
    }
    out
}
