use alloc::string::String;
use alloc::vec::Vec;

use super::{err, BondSpec, SmilesError, SmilesErrorKind};
use crate::element::{BondOrder, Element};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Atom {
        element: Element,
        aromatic: bool,
        hydrogens: Option<u8>,
    },
    Bond(BondSpec),
    RingClosure(u16),
    BranchOpen,
    BranchClose,
    Dot,
}

/// One lexical unit with the character offset it starts at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmilesToken {
    pub kind: TokenKind,
    pub position: usize,
    pub(crate) first_char: char,
}

const AROMATIC: [(char, Element); 5] = [
    ('c', Element::C),
    ('n', Element::N),
    ('o', Element::O),
    ('p', Element::P),
    ('s', Element::S),
];

fn unsupported(position: usize, what: &'static str) -> SmilesError {
    err(position, SmilesErrorKind::UnsupportedFeature(what))
}

pub fn tokenize(input: &str) -> Result<Vec<SmilesToken>, SmilesError> {
    let chars: Vec<char> = input.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = match c {
            '(' => {
                i += 1;
                TokenKind::BranchOpen
            }
            ')' => {
                i += 1;
                TokenKind::BranchClose
            }
            '.' => {
                i += 1;
                TokenKind::Dot
            }
            '-' => {
                i += 1;
                TokenKind::Bond(BondSpec::Order(BondOrder::Single))
            }
            '=' => {
                i += 1;
                TokenKind::Bond(BondSpec::Order(BondOrder::Double))
            }
            '#' => {
                i += 1;
                TokenKind::Bond(BondSpec::Order(BondOrder::Triple))
            }
            ':' => {
                i += 1;
                TokenKind::Bond(BondSpec::Aromatic)
            }
            '/' | '\\' => return Err(unsupported(i, "directional bond (stereo)")),
            '$' => return Err(unsupported(i, "quadruple bond")),
            '0'..='9' => {
                i += 1;
                TokenKind::RingClosure(c as u16 - '0' as u16)
            }
            '%' => {
                let digits: String = chars.iter().skip(i + 1).take(2).collect();
                if digits.len() != 2 || !digits.chars().all(|d| d.is_ascii_digit()) {
                    return Err(err(i, SmilesErrorKind::UnexpectedChar('%')));
                }
                i += 3;
                TokenKind::RingClosure(digits.parse().expect("two ascii digits"))
            }
            '[' => {
                let (kind, next) = bracket_atom(&chars, i)?;
                i = next;
                kind
            }
            '*' => return Err(err(i, SmilesErrorKind::UnsupportedElement(String::from("*")))),
            _ if c.is_ascii_alphabetic() => {
                let (kind, next) = organic_atom(&chars, i)?;
                i = next;
                kind
            }
            _ => return Err(err(i, SmilesErrorKind::UnexpectedChar(c))),
        };
        tokens.push(SmilesToken {
            kind,
            position: start,
            first_char: c,
        });
    }
    Ok(tokens)
}

fn organic_atom(chars: &[char], i: usize) -> Result<(TokenKind, usize), SmilesError> {
    let c = chars[i];
    let two: Option<String> = chars.get(i + 1).map(|&d| [c, d].iter().collect());
    if let Some(two) = two.as_deref() {
        if two == "Cl" || two == "Br" {
            let element = Element::from_symbol(two).expect("halogen symbol");
            return Ok((atom(element, false, None), i + 2));
        }
    }
    let mut buf = [0u8; 4];
    if let Some(element) = Element::from_symbol(c.encode_utf8(&mut buf)) {
        return Ok((atom(element, false, None), i + 1));
    }
    if let Some(&(_, element)) = AROMATIC.iter().find(|(a, _)| *a == c) {
        return Ok((atom(element, true, None), i + 1));
    }
    Err(err(i, SmilesErrorKind::UnsupportedElement(String::from(c))))
}

fn atom(element: Element, aromatic: bool, hydrogens: Option<u8>) -> TokenKind {
    TokenKind::Atom {
        element,
        aromatic,
        hydrogens,
    }
}

/// Parses `[...]` starting at the opening bracket; returns the index after `]`.
fn bracket_atom(chars: &[char], open: usize) -> Result<(TokenKind, usize), SmilesError> {
    let mut i = open + 1;
    let at = |i: usize| chars.get(i).copied();
    if at(i).is_some_and(|c| c.is_ascii_digit()) {
        return Err(unsupported(open, "isotope"));
    }
    // element symbol: uppercase + optional lowercase, or aromatic lowercase
    let Some(first) = at(i) else {
        return Err(err(i, SmilesErrorKind::UnexpectedEnd));
    };
    let (element, aromatic) = if first.is_ascii_uppercase() {
        let mut symbol = String::from(first);
        i += 1;
        if let Some(second) = at(i).filter(|c| c.is_ascii_lowercase()) {
            let mut two = symbol.clone();
            two.push(second);
            if Element::from_symbol(&two).is_some() || !matches!(second, 'c' | 'n' | 'o' | 'p' | 's') {
                // consume; a lowercase letter after an element symbol is part of it
                symbol = two;
                i += 1;
            }
        }
        match Element::from_symbol(&symbol) {
            Some(e) => (e, false),
            None => return Err(err(open, SmilesErrorKind::UnsupportedElement(symbol))),
        }
    } else if let Some(&(_, e)) = AROMATIC.iter().find(|(a, _)| *a == first) {
        i += 1;
        if let Some(second) = at(i).filter(|c| c.is_ascii_lowercase()) {
            let symbol: String = [first, second].iter().collect();
            return Err(err(open, SmilesErrorKind::UnsupportedElement(symbol)));
        }
        (e, true)
    } else {
        return Err(err(open, SmilesErrorKind::UnsupportedElement(String::from(first))));
    };
    if at(i) == Some('@') {
        return Err(unsupported(open, "chirality"));
    }
    let mut hydrogens = 0u8;
    if at(i) == Some('H') {
        i += 1;
        hydrogens = 1;
        if let Some(d) = at(i).and_then(|c| c.to_digit(10)) {
            hydrogens = d as u8;
            i += 1;
        }
    }
    match at(i) {
        Some(']') => Ok((atom(element, aromatic, Some(hydrogens)), i + 1)),
        Some('+') | Some('-') => Err(unsupported(open, "formal charge")),
        Some(':') => Err(unsupported(open, "atom class")),
        Some(c) => Err(err(i, SmilesErrorKind::UnexpectedChar(c))),
        None => Err(err(i, SmilesErrorKind::UnexpectedEnd)),
    }
}
