use std::collections::BTreeMap;

use crate::chem::{Atom, Bond, BondOrder, BondStereo, Chirality, MolecularGraph, Slot};

use super::{Fragment, MarkushError, MarkushScaffold};

/// What a consumed placeholder atom turns into.
#[derive(Clone, Copy)]
enum Replacement {
    Atom(usize),
    Hydrogen,
}

fn attachment(g: &MolecularGraph, atom: usize) -> Result<(usize, usize), MarkushError> {
    let adj = g.adjacency();
    match adj[atom].as_slice() {
        [(nbr, bond)] => {
            if g.bonds[*bond].order != BondOrder::Single {
                return Err(MarkushError::Unsupported("attachment through a non-single bond".into()));
            }
            Ok((*nbr, *bond))
        }
        _ => Err(MarkushError::Unsupported("attachment point without exactly one neighbour".into())),
    }
}

/// Merges resolved fragments onto the scaffold. Every pair of placeholders
/// becomes one single bond; a hydrogen fragment removes the placeholder and
/// adds an implicit hydrogen. Stereo descriptors are carried across.
pub fn zip(scaffold: &MarkushScaffold, assignment: &BTreeMap<String, Fragment>) -> Result<MolecularGraph, MarkushError> {
    if let Some(extra) = assignment.keys().find(|k| !scaffold.labels.contains(*k)) {
        return Err(MarkushError::UnknownLabel(extra.clone()));
    }
    // one combined graph: scaffold first, then each fragment offset
    let mut atoms: Vec<Atom> = scaffold.graph.atoms.clone();
    let mut bonds: Vec<Bond> = scaffold.graph.bonds.clone();
    let mut replace: Vec<Option<Replacement>> = vec![None; atoms.len()];
    let mut new_bonds: Vec<(usize, usize)> = Vec::new();
    let mut extra_h: Vec<usize> = Vec::new();

    for ap in &scaffold.graph.attachment_points {
        let fragment = assignment.get(&ap.label).ok_or_else(|| MarkushError::MissingLabel(ap.label.clone()))?;
        let (anchor, _) = attachment(&scaffold.graph, ap.atom)?;
        match fragment {
            Fragment::Hydrogen => {
                replace[ap.atom] = Some(Replacement::Hydrogen);
                extra_h.push(anchor);
            }
            Fragment::Group(fg) => {
                if fg.attachment_points.len() != 1 {
                    return Err(MarkushError::AttachmentCount(fg.attachment_points.len()));
                }
                let offset = atoms.len();
                let q = fg.attachment_points[0].atom;
                let (f_anchor, _) = attachment(fg, q)?;
                atoms.extend(fg.atoms.iter().cloned());
                replace.extend(std::iter::repeat_n(None, fg.atoms.len()));
                bonds.extend(fg.bonds.iter().map(|b| Bond {
                    a: b.a + offset,
                    b: b.b + offset,
                    order: b.order,
                    stereo: b.stereo.map(|s| BondStereo { ref_a: s.ref_a + offset, ref_b: s.ref_b + offset, config: s.config }),
                }));
                replace[ap.atom] = Some(Replacement::Atom(f_anchor + offset));
                replace[q + offset] = Some(Replacement::Atom(anchor));
                new_bonds.push((anchor, f_anchor + offset));
            }
        }
    }

    let combined = MolecularGraph { atoms, bonds, attachment_points: Vec::new() };
    let consumed: Vec<bool> = replace.iter().map(Option::is_some).collect();
    let mut map = vec![usize::MAX; combined.atoms.len()];
    let mut out_atoms = Vec::new();
    for (i, a) in combined.atoms.iter().enumerate() {
        if !consumed[i] {
            map[i] = out_atoms.len();
            out_atoms.push(a.clone());
        }
    }
    for &anchor in &extra_h {
        out_atoms[map[anchor]].hydrogens += 1;
    }
    let slot = |i: usize| -> Slot {
        match replace[i] {
            Some(Replacement::Atom(j)) => Slot::Atom(map[j]),
            Some(Replacement::Hydrogen) => Slot::Hydrogen,
            None => Slot::Atom(map[i]),
        }
    };

    let adj = combined.adjacency();
    let mut out_bonds = Vec::new();
    for b in &combined.bonds {
        if consumed[b.a] || consumed[b.b] {
            continue;
        }
        let stereo = b.stereo.and_then(|s| {
            // a reference that became a hydrogen is replaced by the other
            // substituent on that side, which flips the descriptor
            let mut config = s.config;
            let mut fix = |end: usize, partner: usize, r: usize| -> Option<usize> {
                match slot(r) {
                    Slot::Atom(x) => Some(x),
                    Slot::Hydrogen => {
                        let other = adj[end].iter().map(|&(j, _)| j).find(|&j| j != partner && j != r && !consumed[j])?;
                        config = config.flipped();
                        Some(map[other])
                    }
                }
            };
            let ra = fix(b.a, b.b, s.ref_a)?;
            let rb = fix(b.b, b.a, s.ref_b)?;
            Some(BondStereo { ref_a: ra, ref_b: rb, config })
        });
        out_bonds.push(Bond { a: map[b.a], b: map[b.b], order: b.order, stereo });
    }
    for &(x, y) in &new_bonds {
        out_bonds.push(Bond::new(map[x], map[y], BondOrder::Single));
    }

    let mut g = MolecularGraph { atoms: out_atoms, bonds: out_bonds, attachment_points: Vec::new() };
    // chirality is expressed against neighbour order, so re-express it
    for (old, a) in combined.atoms.iter().enumerate() {
        if consumed[old] || a.chirality == Chirality::None {
            continue;
        }
        let new = map[old];
        let order: Vec<Slot> = combined
            .chiral_reference(old)
            .into_iter()
            .map(|s| match s {
                Slot::Atom(i) => slot(i),
                Slot::Hydrogen => Slot::Hydrogen,
            })
            .collect();
        let hydrogens = order.iter().filter(|s| matches!(s, Slot::Hydrogen)).count();
        if hydrogens > 1 || g.atoms[new].hydrogens > 1 {
            g.atoms[new].chirality = Chirality::None;
        } else {
            g.set_chirality_in_order(new, &order, a.chirality);
        }
    }
    g.validate()?;
    Ok(g)
}
