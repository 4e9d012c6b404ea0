//! Reader and writer for the kekulizable SMILES subset the model can represent.
//!
//! Supported: the nine organic-subset elements (aromatic lowercase forms for
//! C, N, O, P, S), bracket atoms with an optional hydrogen count, bond symbols
//! `-`, `=`, `#`, `:`, branches, and ring closures (`0`-`9`, `%nn`).
//! Rejected with a positioned error: charges, isotopes, stereo markers,
//! atom classes, `.` (multiple components), `$` bonds, wildcards and any
//! element outside the vocabulary.

mod kekulize;
mod lexer;
mod writer;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::element::{BondOrder, Element, ValencyTable};
use crate::graph::MolGraph;

pub use kekulize::{kekulize, AromaticGraph};
pub use lexer::{tokenize, SmilesToken, TokenKind};
pub use writer::{write, write_lenient, write_with};

/// A located parse failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmilesError {
    /// Character offset into the input where the problem was detected.
    pub position: usize,
    pub kind: SmilesErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedEnd,
    UnsupportedElement(String),
    /// Charge, isotope, stereo, atom class, `.`, or `$` bond.
    UnsupportedFeature(&'static str),
    UnbalancedBranch,
    UnclosedRing(u16),
    RingBondMismatch,
    /// Ring closure duplicating an existing bond or closing onto itself.
    InvalidRingClosure,
    BondWithoutAtom,
    Unkekulizable,
    ValencyExceeded,
    Radical,
}

impl fmt::Display for SmilesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: ", self.position)?;
        match &self.kind {
            SmilesErrorKind::Empty => f.write_str("empty SMILES"),
            SmilesErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            SmilesErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            SmilesErrorKind::UnsupportedElement(s) => write!(f, "unsupported element {s:?}"),
            SmilesErrorKind::UnsupportedFeature(what) => write!(f, "unsupported feature: {what}"),
            SmilesErrorKind::UnbalancedBranch => f.write_str("unbalanced branch parentheses"),
            SmilesErrorKind::UnclosedRing(n) => write!(f, "ring closure {n} never closed"),
            SmilesErrorKind::RingBondMismatch => f.write_str("conflicting bond symbols on ring closure"),
            SmilesErrorKind::InvalidRingClosure => f.write_str("ring closure duplicates a bond"),
            SmilesErrorKind::BondWithoutAtom => f.write_str("bond symbol not followed by an atom"),
            SmilesErrorKind::Unkekulizable => f.write_str("aromatic system cannot be kekulized"),
            SmilesErrorKind::ValencyExceeded => f.write_str("atom exceeds its allowed valence"),
            SmilesErrorKind::Radical => f.write_str("bracket atom has an unfilled valence (radical)"),
        }
    }
}

impl core::error::Error for SmilesError {}

impl SmilesErrorKind {
    /// Short machine-friendly reason, used in ingestion reports.
    pub fn reason(&self) -> &'static str {
        match self {
            SmilesErrorKind::UnsupportedElement(_) => "unsupported element",
            SmilesErrorKind::UnsupportedFeature(_) => "unsupported feature",
            SmilesErrorKind::Unkekulizable => "unkekulizable",
            SmilesErrorKind::ValencyExceeded | SmilesErrorKind::Radical => "valence",
            _ => "syntax",
        }
    }
}

fn err(position: usize, kind: SmilesErrorKind) -> SmilesError {
    SmilesError { position, kind }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondSpec {
    Order(BondOrder),
    Aromatic,
    /// No symbol: single, or aromatic between two aromatic atoms.
    Implicit,
}

#[derive(Debug, Clone, Copy)]
pub struct ParsedAtom {
    pub element: Element,
    pub aromatic: bool,
    /// Hydrogen count from a bracket atom; `None` outside brackets.
    pub hydrogens: Option<u8>,
    pub position: usize,
}

/// Parses with the default valency table.
pub fn parse(smiles: &str) -> Result<MolGraph, SmilesError> {
    parse_with(smiles, &ValencyTable::default())
}

/// Parses a single-component SMILES string into a kekulized graph whose
/// atoms respect `vt`.
pub fn parse_with(smiles: &str, vt: &ValencyTable) -> Result<MolGraph, SmilesError> {
    let tokens = tokenize(smiles)?;
    if tokens.is_empty() {
        return Err(err(0, SmilesErrorKind::Empty));
    }
    let (atoms, bonds) = build(&tokens, smiles.chars().count())?;
    let aromatic = AromaticGraph::resolve(&atoms, &bonds)?;
    let graph = kekulize(&aromatic).map_err(|e| {
        let pos = e.atom.map(|a| atoms[a].position).unwrap_or(0);
        err(pos, SmilesErrorKind::Unkekulizable)
    })?;
    check_valence(&graph, &atoms, vt)?;
    Ok(graph)
}

fn check_valence(g: &MolGraph, atoms: &[ParsedAtom], vt: &ValencyTable) -> Result<(), SmilesError> {
    for (i, atom) in atoms.iter().enumerate() {
        let used = g.valence_used_unchecked(i);
        let hydrogens = atom.hydrogens.unwrap_or(0) as u32;
        if used + hydrogens > vt.max_valence(atom.element) as u32 {
            return Err(err(atom.position, SmilesErrorKind::ValencyExceeded));
        }
        if atom.hydrogens.is_some()
            && !atom
                .element
                .normal_valences()
                .iter()
                .any(|&v| v as u32 == used + hydrogens)
        {
            return Err(err(atom.position, SmilesErrorKind::Radical));
        }
    }
    Ok(())
}

/// Builds atoms and bonds from the token stream.
fn build(
    tokens: &[SmilesToken],
    input_len: usize,
) -> Result<(Vec<ParsedAtom>, Vec<(usize, usize, BondSpec)>), SmilesError> {
    let mut atoms: Vec<ParsedAtom> = Vec::new();
    let mut bonds: Vec<(usize, usize, BondSpec)> = Vec::new();
    let mut branch_stack: Vec<(usize, usize)> = Vec::new(); // (atom, position)
    let mut previous: Option<usize> = None;
    let mut pending_bond: Option<(BondSpec, usize)> = None;
    // ring number -> (atom, bond spec, position)
    let mut open_rings: Vec<(u16, usize, Option<BondSpec>, usize)> = Vec::new();

    for token in tokens {
        let pos = token.position;
        match token.kind {
            TokenKind::Atom {
                element,
                aromatic,
                hydrogens,
            } => {
                let index = atoms.len();
                atoms.push(ParsedAtom {
                    element,
                    aromatic,
                    hydrogens,
                    position: pos,
                });
                if let Some(prev) = previous {
                    let spec = pending_bond.take().map(|(s, _)| s).unwrap_or(BondSpec::Implicit);
                    bonds.push((prev, index, spec));
                } else if let Some((_, bpos)) = pending_bond {
                    return Err(err(bpos, SmilesErrorKind::BondWithoutAtom));
                }
                previous = Some(index);
            }
            TokenKind::Bond(spec) => {
                if previous.is_none() || pending_bond.is_some() {
                    return Err(err(pos, SmilesErrorKind::UnexpectedChar(token.first_char)));
                }
                pending_bond = Some((spec, pos));
            }
            TokenKind::RingClosure(number) => {
                let Some(current) = previous else {
                    return Err(err(pos, SmilesErrorKind::UnexpectedChar(token.first_char)));
                };
                let spec = pending_bond.take().map(|(s, _)| s);
                if let Some(slot) = open_rings.iter().position(|r| r.0 == number) {
                    let (_, other, other_spec, _) = open_rings.swap_remove(slot);
                    let spec = match (other_spec, spec) {
                        (Some(a), Some(b)) if a != b => {
                            return Err(err(pos, SmilesErrorKind::RingBondMismatch))
                        }
                        (Some(a), _) | (None, Some(a)) => a,
                        (None, None) => BondSpec::Implicit,
                    };
                    if other == current
                        || bonds
                            .iter()
                            .any(|&(a, b, _)| (a == other && b == current) || (a == current && b == other))
                    {
                        return Err(err(pos, SmilesErrorKind::InvalidRingClosure));
                    }
                    bonds.push((other, current, spec));
                } else {
                    open_rings.push((number, current, spec, pos));
                }
            }
            TokenKind::BranchOpen => {
                let Some(current) = previous else {
                    return Err(err(pos, SmilesErrorKind::UnbalancedBranch));
                };
                if pending_bond.is_some() {
                    return Err(err(pos, SmilesErrorKind::UnexpectedChar('(')));
                }
                branch_stack.push((current, pos));
            }
            TokenKind::BranchClose => {
                let Some((anchor, _)) = branch_stack.pop() else {
                    return Err(err(pos, SmilesErrorKind::UnbalancedBranch));
                };
                if let Some((_, bpos)) = pending_bond {
                    return Err(err(bpos, SmilesErrorKind::BondWithoutAtom));
                }
                previous = Some(anchor);
            }
            TokenKind::Dot => {
                return Err(err(pos, SmilesErrorKind::UnsupportedFeature("multiple components ('.')")))
            }
        }
    }
    if let Some((_, bpos)) = pending_bond {
        return Err(err(bpos, SmilesErrorKind::BondWithoutAtom));
    }
    if let Some(&(_, pos)) = branch_stack.last() {
        return Err(err(pos, SmilesErrorKind::UnbalancedBranch));
    }
    if let Some(&(number, _, _, pos)) = open_rings.first() {
        return Err(err(pos.min(input_len), SmilesErrorKind::UnclosedRing(number)));
    }
    if atoms.is_empty() {
        return Err(err(0, SmilesErrorKind::Empty));
    }
    Ok((atoms, bonds))
}

/// Reads one molecule per line, skipping blank lines and `#` comments.
/// Yields `(line number, trimmed text)` pairs.
pub fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            // Allow "SMILES name" lines: the first whitespace-delimited field.
            Some((i + 1, line.split_whitespace().next().unwrap_or(line)))
        }
    })
}
