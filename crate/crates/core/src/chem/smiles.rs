//! SMILES reader: organic subset, bracket atoms, ring closures (incl. `%nn`),
//! tetrahedral and cis/trans stereo, `*` and `[R<n>]` placeholders.

use std::collections::HashMap;

use super::aromatic;
use super::element::Element;
use super::graph::{AttachmentPoint, Atom, Bond, BondOrder, BondStereo, Chirality, DoubleBondConfig, MolecularGraph, Slot};
use super::ChemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dir {
    Up,
    Down,
}

impl Dir {
    pub(crate) fn flip(self) -> Dir {
        match self {
            Dir::Up => Dir::Down,
            Dir::Down => Dir::Up,
        }
    }

    pub(crate) fn symbol(self) -> char {
        match self {
            Dir::Up => '/',
            Dir::Down => '\\',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Single,
    Double,
    Triple,
    Aromatic,
    Directional(Dir),
}

impl BondSym {
    fn from_char(c: char) -> Option<BondSym> {
        Some(match c {
            '-' => BondSym::Single,
            '=' => BondSym::Double,
            '#' => BondSym::Triple,
            ':' => BondSym::Aromatic,
            '/' => BondSym::Directional(Dir::Up),
            '\\' => BondSym::Directional(Dir::Down),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
struct RawAtom {
    element: Element,
    aromatic: bool,
    bracket: bool,
    hcount: u8,
    charge: i8,
    isotope: Option<u16>,
    chirality: Chirality,
    label: Option<String>,
}

#[derive(Debug, Clone)]
struct RawBond {
    a: usize,
    b: usize,
    sym: Option<BondSym>,
    /// Direction read from `a` towards `b`.
    dir: Option<Dir>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Written {
    Atom(usize),
    Hydrogen,
    PendingRing(u32),
}

struct OpenRing {
    atom: usize,
    sym: Option<BondSym>,
    pos: usize,
    slot: usize,
}

struct Reader<'a> {
    chars: Vec<(usize, char)>,
    i: usize,
    text: &'a str,
    atoms: Vec<RawAtom>,
    bonds: Vec<RawBond>,
    written: Vec<Vec<Written>>,
}

/// Implicit hydrogens for an unbracketed atom, or `None` if no default valence fits.
pub(crate) fn implicit_hydrogens(element: Element, aromatic: bool, bond_sum: u8) -> Option<u8> {
    if element.is_placeholder() {
        return Some(0);
    }
    let valences = element.organic_valences()?;
    let v = valences.iter().copied().find(|v| *v >= bond_sum)?;
    if aromatic {
        Some(v.saturating_sub(bond_sum).saturating_sub(1))
    } else {
        Some(v - bond_sum)
    }
}

pub fn parse_smiles(text: &str) -> Result<MolecularGraph, ChemError> {
    if text.trim().is_empty() {
        return Err(ChemError::Empty);
    }
    let mut r = Reader {
        chars: text.char_indices().collect(),
        i: 0,
        text,
        atoms: Vec::new(),
        bonds: Vec::new(),
        written: Vec::new(),
    };
    r.read()?;
    r.build()
}

impl Reader<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).map(|c| c.1)
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).map(|c| c.1)
    }

    fn pos(&self) -> usize {
        self.chars.get(self.i).map(|c| c.0).unwrap_or(self.text.len())
    }

    fn syntax(&self, msg: impl Into<String>) -> ChemError {
        ChemError::Syntax { pos: self.pos(), msg: msg.into() }
    }

    fn read(&mut self) -> Result<(), ChemError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSym, usize)> = None;
        let mut branches: Vec<Option<usize>> = Vec::new();
        let mut rings: HashMap<u32, OpenRing> = HashMap::new();
        let mut ring_ids = 0u32;
        while let Some(c) = self.peek() {
            let pos = self.pos();
            match c {
                '(' => {
                    if prev.is_none() {
                        return Err(self.syntax("branch opened before any atom"));
                    }
                    if pending.is_some() {
                        return Err(self.syntax("bond symbol before branch"));
                    }
                    branches.push(prev);
                    self.i += 1;
                }
                ')' => {
                    if pending.is_some() {
                        return Err(self.syntax("dangling bond symbol"));
                    }
                    prev = branches.pop().ok_or_else(|| self.syntax("unmatched ')'"))?;
                    self.i += 1;
                }
                '.' => {
                    if pending.is_some() {
                        return Err(self.syntax("bond symbol before '.'"));
                    }
                    if !branches.is_empty() {
                        return Err(self.syntax("'.' inside a branch"));
                    }
                    prev = None;
                    self.i += 1;
                }
                '$' => return Err(ChemError::Unsupported { pos, feature: "quadruple bond".into() }),
                c if BondSym::from_char(c).is_some() => {
                    if pending.is_some() {
                        return Err(self.syntax("two consecutive bond symbols"));
                    }
                    if prev.is_none() {
                        return Err(self.syntax("bond symbol without a preceding atom"));
                    }
                    pending = Some((BondSym::from_char(c).unwrap(), pos));
                    self.i += 1;
                }
                '0'..='9' | '%' => {
                    let atom = prev.ok_or_else(|| self.syntax("ring closure before any atom"))?;
                    let digit = self.read_ring_number()?;
                    let sym = pending.take().map(|p| p.0);
                    if let Some(open) = rings.remove(&digit) {
                        if open.atom == atom {
                            return Err(ChemError::Syntax { pos, msg: format!("ring bond {digit} closes on its own atom") });
                        }
                        let merged = match (open.sym, sym) {
                            (Some(x), Some(y)) if x != y => {
                                match (x, y) {
                                    (BondSym::Directional(_), BondSym::Directional(_)) => Some(x),
                                    _ => {
                                        return Err(ChemError::Syntax {
                                            pos,
                                            msg: format!("conflicting bond symbols on ring bond {digit}"),
                                        })
                                    }
                                }
                            }
                            (x, y) => x.or(y),
                        };
                        // direction written at the opening reads opener→closer,
                        // at the closing it reads closer→opener
                        let dir = match (open.sym, sym) {
                            (Some(BondSym::Directional(d)), _) => Some(d),
                            (_, Some(BondSym::Directional(d))) => Some(d.flip()),
                            _ => None,
                        };
                        if self.bonds.iter().any(|b| (b.a == open.atom && b.b == atom) || (b.a == atom && b.b == open.atom)) {
                            return Err(ChemError::Syntax { pos, msg: format!("ring bond {digit} duplicates an existing bond") });
                        }
                        self.bonds.push(RawBond { a: open.atom, b: atom, sym: merged, dir });
                        self.written[open.atom][open.slot] = Written::Atom(atom);
                        self.written[atom].push(Written::Atom(open.atom));
                    } else {
                        ring_ids += 1;
                        let slot = self.written[atom].len();
                        self.written[atom].push(Written::PendingRing(ring_ids));
                        rings.insert(digit, OpenRing { atom, sym, pos, slot });
                    }
                }
                _ => {
                    let atom = self.read_atom()?;
                    let idx = self.atoms.len();
                    let hcount = atom.hcount;
                    let bracket = atom.bracket;
                    self.atoms.push(atom);
                    self.written.push(Vec::new());
                    if let Some(p) = prev {
                        let sym = pending.take().map(|p| p.0);
                        let dir = match sym {
                            Some(BondSym::Directional(d)) => Some(d),
                            _ => None,
                        };
                        self.bonds.push(RawBond { a: p, b: idx, sym, dir });
                        self.written[p].push(Written::Atom(idx));
                        self.written[idx].push(Written::Atom(p));
                    }
                    if bracket && hcount > 0 {
                        self.written[idx].push(Written::Hydrogen);
                    }
                    prev = Some(idx);
                }
            }
        }
        if let Some((_, pos)) = pending {
            return Err(ChemError::Syntax { pos, msg: "dangling bond symbol at end of input".into() });
        }
        if !branches.is_empty() {
            return Err(ChemError::Syntax { pos: self.text.len(), msg: "unclosed branch".into() });
        }
        if let Some((digit, open)) = rings.into_iter().min_by_key(|(_, o)| o.pos) {
            return Err(ChemError::UnclosedRing { digit, pos: open.pos });
        }
        if self.atoms.is_empty() {
            return Err(ChemError::Empty);
        }
        Ok(())
    }

    fn read_ring_number(&mut self) -> Result<u32, ChemError> {
        let c = self.peek().unwrap();
        if c == '%' {
            let (a, b) = (self.peek_at(1), self.peek_at(2));
            match (a, b) {
                (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                    self.i += 3;
                    Ok(a.to_digit(10).unwrap() * 10 + b.to_digit(10).unwrap())
                }
                _ => Err(self.syntax("'%' must be followed by two digits")),
            }
        } else {
            self.i += 1;
            Ok(c.to_digit(10).unwrap())
        }
    }

    fn read_atom(&mut self) -> Result<RawAtom, ChemError> {
        let pos = self.pos();
        let c = self.peek().unwrap();
        let plain = |element: Element, aromatic: bool| RawAtom {
            element,
            aromatic,
            bracket: false,
            hcount: 0,
            charge: 0,
            isotope: None,
            chirality: Chirality::None,
            label: None,
        };
        match c {
            '[' => self.read_bracket(),
            '*' => {
                self.i += 1;
                let mut a = plain(Element::PLACEHOLDER, false);
                a.label = Some("*".into());
                Ok(a)
            }
            'C' if self.peek_at(1) == Some('l') => {
                self.i += 2;
                Ok(plain(Element::CL, false))
            }
            'B' if self.peek_at(1) == Some('r') => {
                self.i += 2;
                Ok(plain(Element::BR, false))
            }
            'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' => {
                self.i += 1;
                Ok(plain(Element::from_symbol(&c.to_string()).unwrap(), false))
            }
            'b' | 'c' | 'n' | 'o' | 'p' | 's' => {
                self.i += 1;
                Ok(plain(Element::from_symbol(&c.to_ascii_uppercase().to_string()).unwrap(), true))
            }
            '>' | '~' | '&' | ';' | ',' | '!' | '{' | '}' | '?' => Err(ChemError::Unsupported {
                pos,
                feature: format!("'{c}' (reaction, query or polymer notation)"),
            }),
            c if c.is_ascii_alphabetic() => {
                let sym: String = self.chars[self.i..]
                    .iter()
                    .take(2)
                    .map(|x| x.1)
                    .take_while(|x| x.is_ascii_alphabetic())
                    .collect();
                Err(ChemError::UnknownElement { pos, symbol: sym })
            }
            _ => Err(self.syntax(format!("unexpected character '{c}'"))),
        }
    }

    fn read_number(&mut self) -> Option<u32> {
        let mut v: Option<u32> = None;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            v = Some(v.unwrap_or(0).saturating_mul(10).saturating_add(d));
            self.i += 1;
        }
        v
    }

    fn read_bracket(&mut self) -> Result<RawAtom, ChemError> {
        self.i += 1; // '['
        let isotope = self.read_number();
        let sym_pos = self.pos();
        let c = self.peek().ok_or_else(|| self.syntax("unterminated bracket atom"))?;
        let mut label = None;
        let (element, aromatic) = if c == '*' {
            self.i += 1;
            (Element::PLACEHOLDER, false)
        } else if c == 'R' && matches!(self.peek_at(1), Some(d) if d.is_ascii_digit() || d == ']') {
            self.i += 1;
            let n = self.read_number();
            label = Some(match n {
                Some(n) => format!("R{n}"),
                None => "R".to_string(),
            });
            (Element::PLACEHOLDER, false)
        } else if c.is_ascii_lowercase() {
            let two: String = [Some(c), self.peek_at(1)].into_iter().flatten().collect();
            let (sym, len) = if matches!(two.as_str(), "se" | "as" | "te") {
                (two.clone(), 2)
            } else {
                (c.to_string(), 1)
            };
            let mut upper = sym.clone();
            upper[..1].make_ascii_uppercase();
            let e = Element::from_symbol(&upper)
                .filter(|e| e.can_be_aromatic())
                .ok_or_else(|| ChemError::UnknownElement { pos: sym_pos, symbol: sym.clone() })?;
            self.i += len;
            (e, true)
        } else if c.is_ascii_uppercase() {
            let next = self.peek_at(1).filter(|x| x.is_ascii_lowercase());
            let two = next.map(|n| format!("{c}{n}"));
            match two.as_deref().and_then(Element::from_symbol) {
                Some(e) => {
                    self.i += 2;
                    (e, false)
                }
                None => {
                    let e = Element::from_symbol(&c.to_string()).ok_or_else(|| ChemError::UnknownElement {
                        pos: sym_pos,
                        symbol: two.unwrap_or_else(|| c.to_string()),
                    })?;
                    self.i += 1;
                    (e, false)
                }
            }
        } else {
            return Err(self.syntax(format!("expected element symbol, found '{c}'")));
        };

        let mut chirality = Chirality::None;
        if self.peek() == Some('@') {
            self.i += 1;
            chirality = Chirality::CounterClockwise;
            if self.peek() == Some('@') {
                self.i += 1;
                chirality = Chirality::Clockwise;
            }
            if matches!(self.peek(), Some('T' | 'A' | 'S' | 'O')) {
                return Err(ChemError::Unsupported { pos: self.pos(), feature: "extended chirality class".into() });
            }
        }
        let mut hcount = 0u8;
        if self.peek() == Some('H') {
            self.i += 1;
            hcount = self.read_number().unwrap_or(1).min(u8::MAX as u32) as u8;
        }
        let mut charge: i32 = 0;
        if let Some(sign @ ('+' | '-')) = self.peek() {
            let unit = if sign == '+' { 1 } else { -1 };
            self.i += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.i += 1;
                    charge += unit;
                }
            }
        }
        if !(-8..=8).contains(&charge) {
            return Err(self.syntax(format!("formal charge {charge} out of range")));
        }
        let mut class = None;
        if self.peek() == Some(':') {
            self.i += 1;
            class = Some(self.read_number().ok_or_else(|| self.syntax("atom class needs digits"))?);
        }
        if self.peek() != Some(']') {
            return Err(match self.peek() {
                None => self.syntax("unterminated bracket atom"),
                Some(c) => self.syntax(format!("unexpected '{c}' in bracket atom")),
            });
        }
        self.i += 1;
        if element.is_placeholder() && label.is_none() {
            label = Some(match (class, isotope) {
                (Some(n), _) => format!("R{n}"),
                (None, Some(n)) => format!("R{n}"),
                (None, None) => "*".to_string(),
            });
        }
        let isotope = if element.is_placeholder() {
            None
        } else {
            isotope.map(|v| v.min(u16::MAX as u32) as u16)
        };
        Ok(RawAtom { element, aromatic, bracket: true, hcount, charge: charge as i8, isotope, chirality, label })
    }

    fn build(self) -> Result<MolecularGraph, ChemError> {
        let n = self.atoms.len();
        let mut atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                element: a.element,
                formal_charge: a.charge,
                hydrogens: a.hcount,
                isotope: a.isotope,
                chirality: Chirality::None,
                aromatic: a.aromatic,
            })
            .collect();
        let mut bonds: Vec<Bond> = Vec::with_capacity(self.bonds.len());
        let mut explicit_double = Vec::with_capacity(self.bonds.len());
        for rb in &self.bonds {
            let both_aromatic = self.atoms[rb.a].aromatic && self.atoms[rb.b].aromatic;
            let order = match rb.sym {
                None => {
                    if both_aromatic {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    }
                }
                Some(BondSym::Single) | Some(BondSym::Directional(_)) => BondOrder::Single,
                Some(BondSym::Double) => BondOrder::Double,
                Some(BondSym::Triple) => BondOrder::Triple,
                Some(BondSym::Aromatic) => BondOrder::Aromatic,
            };
            if order == BondOrder::Aromatic {
                atoms[rb.a].aromatic = true;
                atoms[rb.b].aromatic = true;
            }
            explicit_double.push(order == BondOrder::Double);
            bonds.push(Bond::new(rb.a, rb.b, order));
        }
        let mut g = MolecularGraph { atoms, bonds, attachment_points: Vec::new() };

        for (i, raw) in self.atoms.iter().enumerate() {
            if raw.bracket {
                continue;
            }
            let sum = g.bond_valence_sum(i);
            match implicit_hydrogens(raw.element, g.atoms[i].aromatic, sum) {
                Some(h) => g.atoms[i].hydrogens = h,
                None => {
                    return Err(ChemError::Valence {
                        atom: i,
                        element: raw.element.symbol().to_string(),
                        valence: sum,
                        max: raw.element.max_valence(0),
                    })
                }
            }
        }

        let input_aromatic: Vec<bool> = g.bonds.iter().map(|b| b.order == BondOrder::Aromatic).collect();
        aromatic::kekulize(&mut g, None)?;
        for a in &mut g.atoms {
            a.aromatic = false;
        }
        g.validate_valence()?;

        // tetrahedral tags: convert from written order to the reference order
        for (i, raw) in self.atoms.iter().enumerate() {
            if raw.chirality == Chirality::None {
                continue;
            }
            let order: Vec<Slot> = self.written[i]
                .iter()
                .filter_map(|w| match w {
                    Written::Atom(j) => Some(Slot::Atom(*j)),
                    Written::Hydrogen => Some(Slot::Hydrogen),
                    Written::PendingRing(_) => None,
                })
                .collect();
            let slots = order.len();
            if raw.hcount > 1 || !(3..=4).contains(&slots) {
                continue;
            }
            g.set_chirality_in_order(i, &order, raw.chirality);
        }

        // cis/trans from directional single bonds
        let dir_from = |from: usize, to: usize| -> Option<Dir> {
            self.bonds.iter().find_map(|b| {
                if b.a == from && b.b == to {
                    b.dir
                } else if b.b == from && b.a == to {
                    b.dir.map(Dir::flip)
                } else {
                    None
                }
            })
        };
        let adjacency = g.adjacency();
        for bi in 0..g.bonds.len() {
            if !explicit_double[bi] {
                continue;
            }
            let (a, b) = (g.bonds[bi].a, g.bonds[bi].b);
            let side = |center: usize, partner: usize, into: bool| {
                adjacency[center].iter().find_map(|&(x, xb)| {
                    if x == partner || g.bonds[xb].order != BondOrder::Single {
                        return None;
                    }
                    let d = if into { dir_from(x, center) } else { dir_from(center, x) };
                    d.map(|d| (x, d))
                })
            };
            if let (Some((x, d1)), Some((y, d2))) = (side(a, b, true), side(b, a, false)) {
                let config = if d1 == d2 { DoubleBondConfig::Trans } else { DoubleBondConfig::Cis };
                g.bonds[bi].stereo = Some(BondStereo { ref_a: x, ref_b: y, config });
            }
        }

        aromatic::perceive(&mut g);
        aromatic::settle_unperceived(&mut g, &input_aromatic)?;

        let mut labels: Vec<(usize, String)> = Vec::new();
        for (i, raw) in self.atoms.iter().enumerate() {
            if let Some(label) = &raw.label {
                labels.push((i, label.clone()));
            }
        }
        for (atom, label) in labels {
            let degree = g.degree(atom);
            if degree != 1 {
                return Err(ChemError::PlaceholderDegree { label, degree });
            }
            if g.attachment_points.iter().any(|ap| ap.label == label) {
                return Err(ChemError::DuplicateLabel(label));
            }
            g.attachment_points.push(AttachmentPoint { atom, label });
        }
        debug_assert!(n == g.atoms.len());
        Ok(g)
    }
}
