//! Periodic table lookups and permitted valences.

use std::fmt;

use serde::{Deserialize, Serialize};

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Upper bound used for elements without a main-group valence model (metals, f-block).
const GENERIC_MAX_VALENCE: u8 = 8;

/// Chemical element by atomic number. Atomic number 0 is the placeholder (`*`, `[R1]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Element(u8);

impl Element {
    pub const PLACEHOLDER: Element = Element(0);
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const SE: Element = Element(34);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (z as usize <= SYMBOLS.len()).then_some(Element(z))
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        if symbol == "*" {
            return Some(Element::PLACEHOLDER);
        }
        SYMBOLS.iter().position(|s| *s == symbol).map(|i| Element(i as u8 + 1))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        if self.0 == 0 {
            "*"
        } else {
            SYMBOLS[self.0 as usize - 1]
        }
    }

    pub fn is_placeholder(self) -> bool {
        self.0 == 0
    }

    fn period(self) -> u8 {
        match self.0 {
            0 => 0,
            1..=2 => 1,
            3..=10 => 2,
            11..=18 => 3,
            19..=36 => 4,
            37..=54 => 5,
            55..=86 => 6,
            _ => 7,
        }
    }

    /// IUPAC group for s- and p-block elements, `None` for d/f-block.
    fn main_group(self) -> Option<u8> {
        let z = self.0;
        match z {
            0 => None,
            1 => Some(1),
            2 => Some(18),
            _ => {
                let (start, end) = match self.period() {
                    2 => (3, 10),
                    3 => (11, 18),
                    4 => (19, 36),
                    5 => (37, 54),
                    6 => (55, 86),
                    _ => (87, 118),
                };
                if z - start < 2 {
                    Some(z - start + 1)
                } else if end - z < 6 {
                    Some(18 - (end - z))
                } else {
                    None
                }
            }
        }
    }

    /// Valences allowed for this element at the given formal charge.
    ///
    /// Main-group atoms take the valences of their isoelectronic neighbour
    /// (N+ behaves like C, O- like F). Second-period atoms never expand their octet.
    pub fn allowed_valences(self, charge: i8) -> Vec<u8> {
        if self.is_placeholder() {
            return vec![1];
        }
        // Neutral nitrogen keeps the organic-subset 3/5 pair.
        if self == Element::N && charge == 0 {
            return vec![3, 5];
        }
        let Some(group) = self.main_group() else {
            return (0..=GENERIC_MAX_VALENCE).collect();
        };
        let eff = group as i16 - charge as i16;
        let second_row = self.period() <= 2;
        let v: Vec<u8> = match eff {
            0 => vec![0],
            1 | 2 => vec![eff as u8],
            13 => vec![3],
            14 => vec![4],
            15 if second_row => vec![3],
            15 => vec![3, 5],
            16 if second_row => vec![2],
            16 => vec![2, 4, 6],
            17 if second_row => vec![1],
            17 => vec![1, 3, 5, 7],
            18 if second_row => vec![0],
            18 => vec![0, 2, 4, 6, 8],
            _ => (0..=GENERIC_MAX_VALENCE).collect(),
        };
        v
    }

    pub fn max_valence(self, charge: i8) -> u8 {
        self.allowed_valences(charge).into_iter().max().unwrap_or(0)
    }

    /// Default valences used to infer implicit hydrogens outside brackets.
    pub fn organic_valences(self) -> Option<&'static [u8]> {
        match self.0 {
            5 => Some(&[3]),
            6 => Some(&[4]),
            7 => Some(&[3, 5]),
            8 => Some(&[2]),
            15 => Some(&[3, 5]),
            16 => Some(&[2, 4, 6]),
            9 | 17 | 35 | 53 => Some(&[1]),
            _ => None,
        }
    }

    /// Elements that may be written lowercase (aromatic) in SMILES.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34 | 52)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl TryFrom<String> for Element {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Element::from_symbol(&s).ok_or_else(|| format!("unknown element symbol {s:?}"))
    }
}

impl From<Element> for String {
    fn from(e: Element) -> String {
        e.symbol().to_string()
    }
}
