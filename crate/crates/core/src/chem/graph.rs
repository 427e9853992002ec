//! Molecular graph model and its structural invariants.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::element::Element;
use super::ChemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic bonds count as one (their pi
    /// electron is accounted separately).
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// Tetrahedral tag relative to the atom's reference neighbour order
/// (implicit hydrogen first, then neighbours by ascending atom index).
/// `CounterClockwise` is SMILES `@`, `Clockwise` is `@@`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chirality {
    #[default]
    None,
    Clockwise,
    CounterClockwise,
}

impl Chirality {
    pub fn inverted(self) -> Chirality {
        match self {
            Chirality::None => Chirality::None,
            Chirality::Clockwise => Chirality::CounterClockwise,
            Chirality::CounterClockwise => Chirality::Clockwise,
        }
    }

    fn flipped_if(self, odd: bool) -> Chirality {
        if odd {
            self.inverted()
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleBondConfig {
    Cis,
    Trans,
}

impl DoubleBondConfig {
    pub fn flipped(self) -> Self {
        match self {
            DoubleBondConfig::Cis => DoubleBondConfig::Trans,
            DoubleBondConfig::Trans => DoubleBondConfig::Cis,
        }
    }

    pub(crate) fn flipped_if(self, cond: bool) -> Self {
        if cond {
            self.flipped()
        } else {
            self
        }
    }
}

/// Cis/trans configuration of a double bond: `ref_a` (a neighbour of the
/// bond's `a` end) and `ref_b` (a neighbour of its `b` end) are cis or trans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BondStereo {
    pub ref_a: usize,
    pub ref_b: usize,
    pub config: DoubleBondConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stereo: Option<BondStereo>,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond { a, b, order, stereo: None }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, atom: usize) -> bool {
        self.a == atom || self.b == atom
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    #[serde(default)]
    pub formal_charge: i8,
    /// Hydrogens carried by this atom (implicit ones are resolved at parse time).
    #[serde(default)]
    pub hydrogens: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotope: Option<u16>,
    #[serde(default)]
    pub chirality: Chirality,
    #[serde(default)]
    pub aromatic: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            hydrogens: 0,
            isotope: None,
            chirality: Chirality::None,
            aromatic: false,
        }
    }

    pub fn with_hydrogens(mut self, h: u8) -> Self {
        self.hydrogens = h;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttachmentPoint {
    pub atom: usize,
    pub label: String,
}

/// A neighbour position around a stereocentre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Hydrogen,
    Atom(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    #[serde(default)]
    pub attachment_points: Vec<AttachmentPoint>,
}

impl MolecularGraph {
    /// Builds a graph and checks every structural invariant.
    pub fn new(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        attachment_points: Vec<AttachmentPoint>,
    ) -> Result<Self, ChemError> {
        let g = MolecularGraph { atoms, bonds, attachment_points };
        g.validate()?;
        Ok(g)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms other than attachment placeholders.
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| !a.element.is_placeholder()).count()
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (bi, b) in self.bonds.iter().enumerate() {
            adj[b.a].push((b.b, bi));
            adj[b.b].push((b.a, bi));
        }
        adj
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.touches(atom)).count()
    }

    pub fn neighbors(&self, atom: usize) -> Vec<usize> {
        self.bonds.iter().filter(|b| b.touches(atom)).map(|b| b.other(atom)).collect()
    }

    pub(crate) fn bond_valence_sum(&self, atom: usize) -> u8 {
        self.bonds
            .iter()
            .filter(|b| b.touches(atom))
            .map(|b| b.order.valence())
            .sum()
    }

    pub fn attachment_label(&self, atom: usize) -> Option<&str> {
        self.attachment_points
            .iter()
            .find(|ap| ap.atom == atom)
            .map(|ap| ap.label.as_str())
    }

    pub fn has_stereo(&self) -> bool {
        self.atoms.iter().any(|a| a.chirality != Chirality::None)
            || self.bonds.iter().any(|b| b.stereo.is_some())
    }

    pub fn has_tetrahedral_stereo(&self) -> bool {
        self.atoms.iter().any(|a| a.chirality != Chirality::None)
    }

    /// Copy with every tetrahedral and cis/trans annotation removed.
    pub fn without_stereo(&self) -> MolecularGraph {
        let mut g = self.clone();
        for a in &mut g.atoms {
            a.chirality = Chirality::None;
        }
        for b in &mut g.bonds {
            b.stereo = None;
        }
        g
    }

    pub fn validate(&self) -> Result<(), ChemError> {
        let n = self.atoms.len();
        let mut seen = HashSet::new();
        for b in &self.bonds {
            if b.a >= n || b.b >= n {
                return Err(ChemError::InvalidBond(format!(
                    "bond {}-{} references a missing atom",
                    b.a, b.b
                )));
            }
            if b.a == b.b {
                return Err(ChemError::InvalidBond(format!("self-bond on atom {}", b.a)));
            }
            if !seen.insert((b.a.min(b.b), b.a.max(b.b))) {
                return Err(ChemError::InvalidBond(format!(
                    "duplicate bond between atoms {} and {}",
                    b.a, b.b
                )));
            }
            if let Some(st) = b.stereo {
                if b.order != BondOrder::Double
                    || self.bond_between(st.ref_a, b.a).is_none()
                    || self.bond_between(st.ref_b, b.b).is_none()
                    || st.ref_a == b.b
                    || st.ref_b == b.a
                {
                    return Err(ChemError::InvalidBond(format!(
                        "inconsistent cis/trans annotation on bond {}-{}",
                        b.a, b.b
                    )));
                }
            }
        }
        self.validate_valence()?;
        let mut labels = BTreeSet::new();
        let mut ap_atoms = BTreeSet::new();
        for ap in &self.attachment_points {
            if ap.atom >= n || !self.atoms[ap.atom].element.is_placeholder() {
                return Err(ChemError::Placeholder(format!(
                    "attachment point {} is not a placeholder atom",
                    ap.label
                )));
            }
            let degree = self.degree(ap.atom);
            if degree != 1 {
                return Err(ChemError::PlaceholderDegree { label: ap.label.clone(), degree });
            }
            if !labels.insert(ap.label.as_str()) {
                return Err(ChemError::DuplicateLabel(ap.label.clone()));
            }
            ap_atoms.insert(ap.atom);
        }
        if let Some(i) = (0..n).find(|i| self.atoms[*i].element.is_placeholder() && !ap_atoms.contains(i)) {
            return Err(ChemError::Placeholder(format!("placeholder atom {i} has no attachment label")));
        }
        Ok(())
    }

    /// Every atom's bond orders plus hydrogens stay within its permitted valences.
    pub fn validate_valence(&self) -> Result<(), ChemError> {
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.element.is_placeholder() && self.degree(i) != 1 {
                // reported as a placeholder degree problem instead
                continue;
            }
            let total = self.bond_valence_sum(i) as u16 + atom.hydrogens as u16;
            let max = atom.element.max_valence(atom.formal_charge) as u16;
            if total > max {
                return Err(ChemError::Valence {
                    atom: i,
                    element: atom.element.symbol().to_string(),
                    valence: total.min(u8::MAX as u16) as u8,
                    max: max as u8,
                });
            }
        }
        Ok(())
    }

    /// Reference neighbour order for stereo tags: implicit H first, then
    /// neighbours by ascending index.
    pub fn chiral_reference(&self, atom: usize) -> Vec<Slot> {
        let mut nb = self.neighbors(atom);
        nb.sort_unstable();
        let mut out = Vec::with_capacity(nb.len() + 1);
        if self.atoms[atom].hydrogens > 0 {
            out.push(Slot::Hydrogen);
        }
        out.extend(nb.into_iter().map(Slot::Atom));
        out
    }

    /// Tag that describes this atom's configuration when its neighbours are
    /// listed in `order`.
    pub fn chirality_in_order(&self, atom: usize, order: &[Slot]) -> Chirality {
        let reference = self.chiral_reference(atom);
        let tag = self.atoms[atom].chirality;
        match permutation_parity(&reference, order) {
            Some(odd) => tag.flipped_if(odd),
            None => tag,
        }
    }

    /// Sets the atom's tag from a configuration expressed against `order`.
    pub fn set_chirality_in_order(&mut self, atom: usize, order: &[Slot], tag: Chirality) {
        let reference = self.chiral_reference(atom);
        let odd = permutation_parity(order, &reference).unwrap_or(false);
        self.atoms[atom].chirality = tag.flipped_if(odd);
    }

    /// Relabels atoms: atom `i` moves to position `perm[i]`. Stereo tags are
    /// rewritten so the described configuration is unchanged.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let n = self.atoms.len();
        let mut atoms = vec![Atom::new(Element::C); n];
        for (old, atom) in self.atoms.iter().enumerate() {
            atoms[perm[old]] = atom.clone();
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
                stereo: b.stereo.map(|s| BondStereo {
                    ref_a: perm[s.ref_a],
                    ref_b: perm[s.ref_b],
                    config: s.config,
                }),
            })
            .collect();
        let attachment_points = self
            .attachment_points
            .iter()
            .map(|ap| AttachmentPoint { atom: perm[ap.atom], label: ap.label.clone() })
            .collect();
        let mut g = MolecularGraph { atoms, bonds, attachment_points };
        for old in 0..n {
            let tag = self.atoms[old].chirality;
            if tag == Chirality::None {
                continue;
            }
            let order: Vec<Slot> = self
                .chiral_reference(old)
                .into_iter()
                .map(|s| match s {
                    Slot::Atom(i) => Slot::Atom(perm[i]),
                    Slot::Hydrogen => Slot::Hydrogen,
                })
                .collect();
            g.set_chirality_in_order(perm[old], &order, tag);
        }
        g
    }

    /// Keeps the atoms flagged in `keep`, renumbering densely. Returns the graph
    /// and the old→new index map. Bonds, stereo references and attachment
    /// points touching removed atoms are dropped; callers fix stereo first.
    pub(crate) fn retain_atoms(&self, keep: &[bool]) -> (MolecularGraph, Vec<Option<usize>>) {
        let mut map = vec![None; self.atoms.len()];
        let mut atoms = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if keep[i] {
                map[i] = Some(atoms.len());
                atoms.push(a.clone());
            }
        }
        let mut bonds = Vec::new();
        for b in &self.bonds {
            if let (Some(a), Some(bb)) = (map[b.a], map[b.b]) {
                let stereo = b.stereo.and_then(|s| match (map[s.ref_a], map[s.ref_b]) {
                    (Some(ra), Some(rb)) => Some(BondStereo { ref_a: ra, ref_b: rb, config: s.config }),
                    _ => None,
                });
                bonds.push(Bond { a, b: bb, order: b.order, stereo });
            }
        }
        let attachment_points = self
            .attachment_points
            .iter()
            .filter_map(|ap| map[ap.atom].map(|atom| AttachmentPoint { atom, label: ap.label.clone() }))
            .collect();
        let mut g = MolecularGraph { atoms, bonds, attachment_points };
        // chirality is index-relative: re-express each tag after renumbering
        for (old, a) in self.atoms.iter().enumerate() {
            let Some(new) = map[old] else { continue };
            if a.chirality == Chirality::None {
                continue;
            }
            let order: Vec<Slot> = self
                .chiral_reference(old)
                .into_iter()
                .filter_map(|s| match s {
                    Slot::Atom(i) => map[i].map(Slot::Atom),
                    Slot::Hydrogen => Some(Slot::Hydrogen),
                })
                .collect();
            if order.len() == g.chiral_reference(new).len() {
                g.set_chirality_in_order(new, &order, a.chirality);
            } else {
                g.atoms[new].chirality = Chirality::None;
            }
        }
        (g, map)
    }

    /// The graph with every placeholder atom removed.
    pub fn strip_placeholders(&self) -> MolecularGraph {
        let keep: Vec<bool> = self.atoms.iter().map(|a| !a.element.is_placeholder()).collect();
        self.retain_atoms(&keep).0
    }

    /// Bonds that lie on at least one cycle.
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let adj = self.adjacency();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative Tarjan bridge search: (node, parent bond, next neighbour index)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (u, pb, ref mut idx)) = stack.last_mut() {
                if *idx < adj[u].len() {
                    let (v, bi) = adj[u][*idx];
                    *idx += 1;
                    if bi == pb {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, bi, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            is_bridge[pb] = true;
                        }
                    }
                }
            }
        }
        is_bridge.into_iter().map(|b| !b).collect()
    }

    pub(crate) fn ring_atoms(&self) -> Vec<bool> {
        let rb = self.ring_bonds();
        let mut out = vec![false; self.atoms.len()];
        for (b, ring) in self.bonds.iter().zip(rb) {
            if ring {
                out[b.a] = true;
                out[b.b] = true;
            }
        }
        out
    }
}

/// Parity of the permutation taking `from` to `to`; `Some(true)` when odd.
/// `None` if the two sequences are not permutations of each other.
pub(crate) fn permutation_parity(from: &[Slot], to: &[Slot]) -> Option<bool> {
    if from.len() != to.len() {
        return None;
    }
    let mut idx = Vec::with_capacity(from.len());
    for s in to {
        idx.push(from.iter().position(|f| f == s)?);
    }
    let mut swaps = 0;
    let mut visited = vec![false; idx.len()];
    for start in 0..idx.len() {
        if visited[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !visited[j] {
            visited[j] = true;
            j = idx[j];
            len += 1;
        }
        swaps += len - 1;
    }
    Some(swaps % 2 == 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carbon(h: u8) -> Atom {
        Atom::new(Element::C).with_hydrogens(h)
    }

    #[test]
    fn rejects_self_and_duplicate_bonds() {
        let atoms = vec![carbon(3), carbon(3)];
        let err = MolecularGraph::new(atoms.clone(), vec![Bond::new(0, 0, BondOrder::Single)], vec![]);
        assert!(matches!(err, Err(ChemError::InvalidBond(_))));
        let err = MolecularGraph::new(
            atoms,
            vec![Bond::new(0, 1, BondOrder::Single), Bond::new(1, 0, BondOrder::Single)],
            vec![],
        );
        assert!(matches!(err, Err(ChemError::InvalidBond(_))));
    }

    #[test]
    fn rejects_over_valent_carbon() {
        let atoms = vec![carbon(3), carbon(0)];
        let err = MolecularGraph::new(atoms, vec![Bond::new(0, 1, BondOrder::Double)], vec![]);
        assert!(matches!(err, Err(ChemError::Valence { atom: 0, .. })));
    }

    #[test]
    fn parity_of_swaps() {
        use Slot::Atom as A;
        assert_eq!(permutation_parity(&[A(0), A(1), A(2)], &[A(0), A(1), A(2)]), Some(false));
        assert_eq!(permutation_parity(&[A(0), A(1), A(2)], &[A(1), A(0), A(2)]), Some(true));
        assert_eq!(permutation_parity(&[A(0), A(1), A(2)], &[A(1), A(2), A(0)]), Some(false));
        assert_eq!(permutation_parity(&[A(0), A(1)], &[A(0), A(2)]), None);
    }

    #[test]
    fn ring_bonds_of_methylcyclopropane() {
        // C0 - C1, ring C1 C2 C3
        let atoms = vec![carbon(3), carbon(1), carbon(2), carbon(2)];
        let bonds = vec![
            Bond::new(0, 1, BondOrder::Single),
            Bond::new(1, 2, BondOrder::Single),
            Bond::new(2, 3, BondOrder::Single),
            Bond::new(3, 1, BondOrder::Single),
        ];
        let g = MolecularGraph::new(atoms, bonds, vec![]).unwrap();
        assert_eq!(g.ring_bonds(), vec![false, true, true, true]);
    }
}
