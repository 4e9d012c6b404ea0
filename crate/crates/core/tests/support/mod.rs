//! Brute-force helpers for exhaustive small-graph checks.
#![allow(dead_code)]

use molrnn_core::{BondOrder, Element, MolGraph};

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                go(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            p.push((a, b));
        }
    }
    p
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &(a, b) in edges {
            let w = if a == v { b } else if b == v { a } else { continue };
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// One representative per isomorphism class of connected simple graphs on
/// `n` vertices, found by minimizing the adjacency bitmask over all relabelings.
pub fn unlabeled_connected(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 1 {
        return vec![Vec::new()];
    }
    let all = pairs(n);
    let mut index = vec![vec![0usize; n]; n];
    for (k, &(a, b)) in all.iter().enumerate() {
        index[a][b] = k;
        index[b][a] = k;
    }
    let perms = permutations(n);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u32..(1 << all.len()) {
        let edges: Vec<(usize, usize)> = all
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        if edges.len() + 1 < n || !connected(n, &edges) {
            continue;
        }
        let canon = perms
            .iter()
            .map(|p| edges.iter().fold(0u32, |m, &(a, b)| m | 1 << index[p[a]][p[b]]))
            .min()
            .unwrap();
        if seen.insert(canon) {
            out.push(edges);
        }
    }
    out
}

/// Lexicographically smallest (labels, upper-triangle orders) over all relabelings.
pub fn brute_canonical(g: &MolGraph, perms: &[Vec<usize>]) -> Vec<u8> {
    let n = g.atom_count();
    let mut best: Option<Vec<u8>> = None;
    let mut buf = vec![0u8; n + n * n];
    for p in perms {
        buf.iter_mut().for_each(|b| *b = 0);
        for v in 0..n {
            buf[p[v]] = g.element(v).index() as u8 + 1;
        }
        for b in g.bonds() {
            let (x, y) = (p[b.a].min(p[b.b]), p[b.a].max(p[b.b]));
            buf[n + x * n + y] = b.order.order();
        }
        if best.as_ref().is_none_or(|cur| buf < *cur) {
            best = Some(buf.clone());
        }
    }
    best.unwrap()
}

/// Every labeling of `edges` on `n` atoms by `elements`.
pub fn labelings(n: usize, edges: &[(usize, usize)], elements: &[Element]) -> Vec<MolGraph> {
    let k = elements.len();
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let atoms: Vec<Element> = (0..n)
                .map(|_| {
                    let e = elements[code % k];
                    code /= k;
                    e
                })
                .collect();
            let bonds: Vec<(usize, usize, BondOrder)> =
                edges.iter().map(|&(a, b)| (a, b, BondOrder::Single)).collect();
            MolGraph::from_parts(&atoms, &bonds).unwrap()
        })
        .collect()
}

/// Every assignment of bond orders to the bonds of `g`.
pub fn bond_order_variants(g: &MolGraph) -> Vec<MolGraph> {
    let bonds: Vec<_> = g.bonds().collect();
    let total = 3usize.pow(bonds.len() as u32);
    (0..total)
        .map(|mut code| {
            let orders: Vec<(usize, usize, BondOrder)> = bonds
                .iter()
                .map(|b| {
                    let o = BondOrder::ALL[code % 3];
                    code /= 3;
                    (b.a, b.b, o)
                })
                .collect();
            MolGraph::from_parts(g.atoms(), &orders).unwrap()
        })
        .collect()
}
