//! Element vocabulary, bond orders and the valency table.

use core::fmt;
use core::str::FromStr;

/// One of the nine heavy-atom elements the generator models.
///
/// The discriminant is the element's category index in sequence space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Element {
    C = 0,
    N = 1,
    O = 2,
    F = 3,
    P = 4,
    S = 5,
    Cl = 6,
    Br = 7,
    I = 8,
}

/// Number of element categories.
pub const ELEMENT_COUNT: usize = 9;

impl Element {
    pub const ALL: [Element; ELEMENT_COUNT] = [
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Element> {
        Self::ALL.get(index).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Self::ALL.iter().copied().find(|e| e.symbol() == symbol)
    }

    /// Valences an uncharged atom of this element commonly takes, ascending.
    ///
    /// Used by the SMILES reader to fill implicit hydrogens and to reject
    /// radicals in bracket atoms. The maximum equals the default
    /// [`ValencyTable`] entry.
    pub fn normal_valences(self) -> &'static [u8] {
        match self {
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown element symbol")]
pub struct UnknownElement;

impl FromStr for Element {
    type Err = UnknownElement;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Element::from_symbol(s).ok_or(UnknownElement)
    }
}

/// Bond multiplicity stored on a graph edge.
///
/// Category 0 ("no bond") exists only in sequence space and is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum BondOrder {
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondOrder {
    pub const ALL: [BondOrder; 3] = [BondOrder::Single, BondOrder::Double, BondOrder::Triple];

    #[inline]
    pub fn order(self) -> u8 {
        self as u8
    }

    /// Maps an edge category (1..=3) to a bond; 0 and anything larger map to `None`.
    pub fn from_category(category: u8) -> Option<BondOrder> {
        match category {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "-",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
        }
    }
}

/// Maximum total bond order per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValencyTable {
    limits: [u8; ELEMENT_COUNT],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("valency limit for {element} must be at least 1")]
pub struct InvalidValency {
    pub element: Element,
}

impl ValencyTable {
    /// Builds a table from per-element limits in [`Element::ALL`] order.
    pub fn new(limits: [u8; ELEMENT_COUNT]) -> Result<Self, InvalidValency> {
        for element in Element::ALL {
            if limits[element.index()] == 0 {
                return Err(InvalidValency { element });
            }
        }
        Ok(ValencyTable { limits })
    }

    #[inline]
    pub fn max_valence(&self, element: Element) -> u8 {
        self.limits[element.index()]
    }

    pub fn with_limit(mut self, element: Element, limit: u8) -> Result<Self, InvalidValency> {
        if limit == 0 {
            return Err(InvalidValency { element });
        }
        self.limits[element.index()] = limit;
        Ok(self)
    }

    pub fn limits(&self) -> [u8; ELEMENT_COUNT] {
        self.limits
    }
}

impl Default for ValencyTable {
    /// C=4, N=3, O=2, F=1, P=5, S=6, Cl=1, Br=1, I=1.
    fn default() -> Self {
        ValencyTable {
            limits: [4, 3, 2, 1, 5, 6, 1, 1, 1],
        }
    }
}
