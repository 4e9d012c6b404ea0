use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::element::{BondOrder, ValencyTable};
use crate::graph::{GraphError, MolGraph};

/// Writes a valid graph as kekulized SMILES: uppercase atoms, explicit `=`
/// and `#`, depth-first from atom 0 with neighbors in index order.
pub fn write(g: &MolGraph) -> Result<String, GraphError> {
    write_with(g, &ValencyTable::default())
}

pub fn write_with(g: &MolGraph, vt: &ValencyTable) -> Result<String, GraphError> {
    let report = g.check_validity(vt);
    if !report.connected || g.is_empty() {
        return Err(GraphError::Disconnected);
    }
    if !report.valid {
        return Err(GraphError::ValencyViolation(report.violations));
    }
    Ok(write_connected(g))
}

/// Writes a connected graph without checking valences. Over-bonded atoms
/// come out as plain symbols, so the text fails to re-parse.
pub fn write_lenient(g: &MolGraph) -> Result<String, GraphError> {
    if g.is_empty() || !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    Ok(write_connected(g))
}

fn write_connected(g: &MolGraph) -> String {
    let n = g.atom_count();
    let mut preorder = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    // ring bonds opened at the ancestor, closed at the descendant
    let mut opens: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parent = vec![usize::MAX; n];

    let mut counter = 0;
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    preorder[0] = counter;
    counter += 1;
    while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
        let neighbors = g.neighbors(v);
        if *slot == neighbors.len() {
            stack.pop();
            continue;
        }
        let w = neighbors[*slot].0;
        *slot += 1;
        if preorder[w] == usize::MAX {
            preorder[w] = counter;
            counter += 1;
            parent[w] = v;
            children[v].push(w);
            stack.push((w, 0));
        } else if w != parent[v] && preorder[w] < preorder[v] {
            opens[w].push(v);
            closes[v].push(w);
        }
    }

    let mut out = String::new();
    let mut digits: Vec<Option<(usize, usize)>> = Vec::new(); // slot -> (opener, closer)
    emit(g, 0, &children, &opens, &closes, &mut digits, &mut out);
    out
}

fn bond_symbol(order: BondOrder) -> &'static str {
    match order {
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn ring_label(out: &mut String, slot: usize) {
    let number = slot + 1;
    if number < 10 {
        let _ = write!(out, "{number}");
    } else {
        let _ = write!(out, "%{number:02}");
    }
}

fn emit(
    g: &MolGraph,
    v: usize,
    children: &[Vec<usize>],
    opens: &[Vec<usize>],
    closes: &[Vec<usize>],
    digits: &mut Vec<Option<(usize, usize)>>,
    out: &mut String,
) {
    out.push_str(g.element(v).symbol());
    for &other in &closes[v] {
        let slot = digits
            .iter()
            .position(|d| *d == Some((other, v)))
            .expect("ring opened before it closes");
        digits[slot] = None;
        ring_label(out, slot);
    }
    for &other in &opens[v] {
        let slot = match digits.iter().position(Option::is_none) {
            Some(s) => s,
            None => {
                digits.push(None);
                digits.len() - 1
            }
        };
        digits[slot] = Some((v, other));
        out.push_str(bond_symbol(g.bond_between(v, other).expect("ring bond")));
        ring_label(out, slot);
    }
    let kids = &children[v];
    for (k, &child) in kids.iter().enumerate() {
        let last = k + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_symbol(g.bond_between(v, child).expect("tree bond")));
        emit(g, child, children, opens, closes, digits, out);
        if !last {
            out.push(')');
        }
    }
}
