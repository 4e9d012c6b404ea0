mod support;

use std::collections::HashMap;

use molrnn_core::codec::{bandwidth, bfs_order, decode, encode, CodecConfig, CodecError};
use molrnn_core::{canonical_key, BondOrder, Element, MolGraph, ValencyTable};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

const CNO: [Element; 3] = [Element::C, Element::N, Element::O];

/// Keys and brute-force forms must induce the same partition.
fn assert_same_partition(graphs: &[MolGraph], perms: &[Vec<usize>]) {
    let mut by_key: HashMap<Vec<u8>, Vec<u8>> = HashMap::new();
    let mut by_form: HashMap<Vec<u8>, Vec<u8>> = HashMap::new();
    for g in graphs {
        let key = canonical_key(g).as_bytes().to_vec();
        let form = brute_canonical(g, perms);
        if let Some(prev) = by_key.insert(key.clone(), form.clone()) {
            assert_eq!(prev, form, "key collision between non-isomorphic graphs: {g:?}");
        }
        if let Some(prev) = by_form.insert(form, key.clone()) {
            assert_eq!(prev, key, "isomorphic graphs got different keys: {g:?}");
        }
    }
}

#[test]
fn connected_graph_counts() {
    let counts: Vec<usize> = (1..=6).map(|n| unlabeled_connected(n).len()).collect();
    assert_eq!(counts, [1, 1, 2, 6, 21, 112]);
}

#[test]
fn keys_match_isomorphism_up_to_six_atoms() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in 1..=6 {
        let perms = permutations(n);
        let mut graphs = Vec::new();
        for edges in unlabeled_connected(n) {
            for g in labelings(n, &edges, &CNO) {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                graphs.push(g.permuted(&p));
                graphs.push(g);
            }
        }
        assert_same_partition(&graphs, &perms);
    }
}

#[test]
fn keys_respect_bond_orders_up_to_four_atoms() {
    for n in 2..=4 {
        let perms = permutations(n);
        let mut graphs = Vec::new();
        for edges in unlabeled_connected(n) {
            for g in labelings(n, &edges, &CNO) {
                graphs.extend(bond_order_variants(&g));
            }
        }
        assert_same_partition(&graphs, &perms);
    }
}

fn seven_atom_graphs() -> Vec<Vec<(usize, usize)>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for edges in unlabeled_connected(6) {
        for mask in 1u32..(1 << 6) {
            let mut e = edges.clone();
            e.extend((0..6).filter(|k| mask >> k & 1 == 1).map(|k| (k, 6)));
            let bonds: Vec<_> = e.iter().map(|&(a, b)| (a, b, BondOrder::Single)).collect();
            let g = MolGraph::from_parts(&[Element::C; 7], &bonds).unwrap();
            if seen.insert(canonical_key(&g)) {
                out.push(e);
            }
        }
    }
    out
}

fn check_roundtrip(g: &MolGraph, vt: &ValencyTable) {
    for root in (0..g.atom_count()).filter(|&v| g.element(v) == Element::C) {
        let order = bfs_order(g, root).unwrap();
        let width = bandwidth(g, &order);
        let mut position = vec![0; order.len()];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        for window in [1, 2, 3, 12] {
            let cfg = CodecConfig { window, ..CodecConfig::default() };
            match encode(g, &cfg, root) {
                Ok(seq) => {
                    assert!(width <= window);
                    assert_eq!(decode(&seq, vt).unwrap(), g.permuted(&position));
                }
                Err(CodecError::BandwidthOverflow { .. }) => assert!(width > window),
                Err(e) => panic!("unexpected {e}"),
            }
        }
    }
}

#[test]
fn codec_roundtrip_exhaustive_up_to_seven_atoms() {
    let vt = ValencyTable::default();
    let seven = seven_atom_graphs();
    assert_eq!(seven.len(), 853);
    let mut checked = 0;
    for n in 1..=7 {
        let shapes = if n == 7 { seven.clone() } else { unlabeled_connected(n) };
        for edges in shapes {
            for g in labelings(n, &edges, &CNO) {
                if g.check_validity(&vt).valid {
                    check_roundtrip(&g, &vt);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn codec_roundtrip_with_bond_orders() {
    let vt = ValencyTable::default();
    for n in 2..=5 {
        for edges in unlabeled_connected(n) {
            for g in labelings(n, &edges, &CNO) {
                for h in bond_order_variants(&g) {
                    if h.check_validity(&vt).valid {
                        check_roundtrip(&h, &vt);
                        let seq = molrnn_core::codec::encode_default(&h, &CodecConfig::default());
                        if let Ok(seq) = seq {
                            assert_eq!(canonical_key(&decode(&seq, &vt).unwrap()), canonical_key(&h));
                        }
                    }
                }
            }
        }
    }
}
