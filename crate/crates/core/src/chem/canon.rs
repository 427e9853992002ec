//! Canonical atom ranking.
//!
//! Ranks come from iterative refinement of atom invariants (a Morgan-style
//! partition refinement). Stereo descriptors take part in the refinement so
//! that stereoisomers rank differently, and ties that survive refinement are
//! broken one at a time.

use super::graph::{Chirality, DoubleBondConfig, MolecularGraph, Slot};

/// Result of canonical ranking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonInfo {
    /// Unique rank per atom, `0..n`.
    pub ranks: Vec<usize>,
    /// Symmetry classes after refinement, before tie breaking.
    pub classes: Vec<usize>,
    /// Atoms whose chirality tag describes a real stereocentre.
    pub stereo_atoms: Vec<bool>,
    /// Double bonds whose cis/trans annotation is meaningful.
    pub stereo_bonds: Vec<bool>,
}

type Key = (usize, u8, Vec<(usize, u8)>);

fn dense(keys: &[impl Ord]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut out = vec![0; keys.len()];
    let mut r = 0;
    for w in 0..idx.len() {
        if w > 0 && keys[idx[w]] != keys[idx[w - 1]] {
            r += 1;
        }
        out[idx[w]] = r;
    }
    out
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().copied().max().map(|m| m + 1).unwrap_or(0)
}

struct Ctx<'a> {
    g: &'a MolecularGraph,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Ctx<'_> {
    fn initial(&self) -> Vec<usize> {
        let g = self.g;
        let mut labels: Vec<&str> = g.attachment_points.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        let ring = g.ring_atoms();
        let keys: Vec<_> = (0..g.atoms.len())
            .map(|i| {
                let a = &g.atoms[i];
                let label = g.attachment_label(i).and_then(|l| labels.binary_search(&l).ok()).map(|p| p + 1).unwrap_or(0);
                (
                    label,
                    a.element.atomic_number(),
                    a.formal_charge,
                    self.adj[i].len(),
                    a.hydrogens,
                    a.isotope.unwrap_or(0),
                    a.aromatic,
                    ring[i],
                )
            })
            .collect();
        dense(&keys)
    }

    /// Configuration of a stereocentre relative to its rank-ordered
    /// neighbours, or 0 when neighbours tie.
    fn atom_label(&self, i: usize, ranks: &[usize]) -> u8 {
        let atom = &self.g.atoms[i];
        if atom.chirality == Chirality::None || atom.hydrogens > 1 {
            return 0;
        }
        let mut nb: Vec<usize> = self.adj[i].iter().map(|&(j, _)| j).collect();
        if nb.len() + atom.hydrogens as usize != 4 && nb.len() + atom.hydrogens as usize != 3 {
            return 0;
        }
        nb.sort_by_key(|&j| ranks[j]);
        if nb.windows(2).any(|w| ranks[w[0]] == ranks[w[1]]) {
            return 0;
        }
        let mut order = Vec::with_capacity(4);
        if atom.hydrogens == 1 {
            order.push(Slot::Hydrogen);
        }
        order.extend(nb.into_iter().map(Slot::Atom));
        match self.g.chirality_in_order(i, &order) {
            Chirality::Clockwise => 1,
            Chirality::CounterClockwise => 2,
            Chirality::None => 0,
        }
    }

    /// Lowest-ranked substituent on `atom` other than `partner`, if it is
    /// distinguishable from any second substituent.
    fn side_ref(&self, atom: usize, partner: usize, ranks: &[usize]) -> Option<usize> {
        let subs: Vec<usize> = self.adj[atom].iter().map(|&(j, _)| j).filter(|&j| j != partner).collect();
        match subs.as_slice() {
            [x] => Some(*x),
            [x, y] if ranks[*x] != ranks[*y] => Some(if ranks[*x] < ranks[*y] { *x } else { *y }),
            _ => None,
        }
    }

    /// Cis/trans descriptor relative to the lowest-ranked substituents.
    fn bond_config(&self, bi: usize, ranks: &[usize]) -> Option<DoubleBondConfig> {
        let bond = &self.g.bonds[bi];
        let st = bond.stereo?;
        let ra = self.side_ref(bond.a, bond.b, ranks)?;
        let rb = self.side_ref(bond.b, bond.a, ranks)?;
        Some(st.config.flipped_if(ra != st.ref_a).flipped_if(rb != st.ref_b))
    }

    fn labels(&self, ranks: &[usize]) -> Vec<u8> {
        let g = self.g;
        let mut labels: Vec<u8> = (0..g.atoms.len()).map(|i| self.atom_label(i, ranks)).collect();
        for bi in 0..g.bonds.len() {
            if let Some(cfg) = self.bond_config(bi, ranks) {
                let code = match cfg {
                    DoubleBondConfig::Cis => 4,
                    DoubleBondConfig::Trans => 8,
                };
                labels[g.bonds[bi].a] |= code;
                labels[g.bonds[bi].b] |= code;
            }
        }
        labels
    }

    fn refine(&self, mut ranks: Vec<usize>, labels: Option<&[u8]>) -> Vec<usize> {
        loop {
            let owned;
            let lab = match labels {
                Some(l) => l,
                None => {
                    owned = self.labels(&ranks);
                    &owned
                }
            };
            let keys: Vec<Key> = (0..ranks.len())
                .map(|i| {
                    let mut nb: Vec<(usize, u8)> =
                        self.adj[i].iter().map(|&(j, b)| (ranks[j], self.g.bonds[b].order.code())).collect();
                    nb.sort_unstable();
                    (ranks[i], lab[i], nb)
                })
                .collect();
            let next = dense(&keys);
            if class_count(&next) == class_count(&ranks) {
                return next;
            }
            ranks = next;
        }
    }
}

/// Computes canonical ranks and stereo relevance for every atom.
pub fn canonical_ranks(g: &MolecularGraph) -> CanonInfo {
    let ctx = Ctx { g, adj: g.adjacency() };
    let n = g.atoms.len();
    let classes = ctx.refine(ctx.initial(), None);

    let stereo_atoms: Vec<bool> = (0..n).map(|i| ctx.atom_label(i, &classes) != 0).collect();
    let stereo_bonds: Vec<bool> = (0..g.bonds.len()).map(|b| ctx.bond_config(b, &classes).is_some()).collect();

    let labels = ctx.labels(&classes);
    let mut ranks = classes.clone();
    while class_count(&ranks) < n {
        // break the tie in the lowest tied class at its lowest-index member
        let mut seen = vec![0usize; n];
        for &r in &ranks {
            seen[r] += 1;
        }
        let tied = (0..n).find(|&r| seen[r] > 1).expect("a tied class exists");
        let pick = (0..n).find(|&i| ranks[i] == tied).expect("class has members");
        let keys: Vec<(usize, bool)> = (0..n).map(|i| (ranks[i], i != pick)).collect();
        ranks = ctx.refine(dense(&keys), Some(&labels));
    }
    CanonInfo { ranks, classes, stereo_atoms, stereo_bonds }
}
