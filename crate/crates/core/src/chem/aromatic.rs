//! Kekulization and ring-based aromaticity perception.
//!
//! Aromaticity follows a Hückel rule on individual 5- and 6-membered rings,
//! evaluated on the kekulé form so the result does not depend on how the
//! input was written.

use super::canon;
use super::element::Element;
use super::graph::{BondOrder, MolecularGraph};
use super::ChemError;

const SEARCH_BUDGET: usize = 500_000;

/// Replaces every aromatic bond by a single or double bond.
pub(crate) fn kekulize(g: &mut MolecularGraph, priority: Option<&[usize]>) -> Result<(), ChemError> {
    let candidates: Vec<usize> = (0..g.bonds.len()).filter(|&b| g.bonds[b].order == BondOrder::Aromatic).collect();
    if candidates.is_empty() {
        return Ok(());
    }
    let mut touches = vec![false; g.atoms.len()];
    for &b in &candidates {
        touches[g.bonds[b].a] = true;
        touches[g.bonds[b].b] = true;
    }
    let mut needs = vec![false; g.atoms.len()];
    for i in 0..g.atoms.len() {
        if !touches[i] {
            continue;
        }
        let atom = &g.atoms[i];
        let sum = g.bond_valence_sum(i) + atom.hydrogens;
        let allowed = atom.element.allowed_valences(atom.formal_charge);
        let Some(v) = allowed.iter().copied().find(|v| *v >= sum) else {
            return Err(ChemError::Valence {
                atom: i,
                element: atom.element.symbol().to_string(),
                valence: sum,
                max: atom.element.max_valence(atom.formal_charge),
            });
        };
        needs[i] = v > sum;
    }
    assign_doubles(g, &candidates, &needs, priority)
}

/// Chooses a set of `candidates` to become double bonds so that every atom
/// with `needs` set gets exactly one; the remaining candidates become single.
fn assign_doubles(
    g: &mut MolecularGraph,
    candidates: &[usize],
    needs: &[bool],
    priority: Option<&[usize]>,
) -> Result<(), ChemError> {
    let n = g.atoms.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &b in candidates {
        let (x, y) = (g.bonds[b].a, g.bonds[b].b);
        if needs[x] && needs[y] {
            adj[x].push((y, b));
            adj[y].push((x, b));
        }
    }
    let key = |i: usize| priority.map(|p| p[i]).unwrap_or(i);
    for list in &mut adj {
        list.sort_by_key(|&(j, _)| key(j));
    }
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut chosen: Vec<usize> = Vec::new();
    let mut budget = SEARCH_BUDGET;
    let pending: Vec<usize> = (0..n).filter(|&i| needs[i]).collect();

    fn search(
        pending: &[usize],
        adj: &[Vec<(usize, usize)>],
        partner: &mut Vec<Option<usize>>,
        chosen: &mut Vec<usize>,
        key: &dyn Fn(usize) -> usize,
        budget: &mut usize,
    ) -> bool {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        // most constrained unmatched atom first
        let mut best: Option<(usize, usize)> = None;
        for &i in pending {
            if partner[i].is_some() {
                continue;
            }
            let options = adj[i].iter().filter(|(j, _)| partner[*j].is_none()).count();
            let better = match best {
                None => true,
                Some((bi, bo)) => options < bo || (options == bo && key(i) < key(bi)),
            };
            if better {
                best = Some((i, options));
            }
        }
        let Some((atom, options)) = best else { return true };
        if options == 0 {
            return false;
        }
        for &(j, b) in &adj[atom] {
            if partner[j].is_some() {
                continue;
            }
            partner[atom] = Some(j);
            partner[j] = Some(atom);
            chosen.push(b);
            if search(pending, adj, partner, chosen, key, budget) {
                return true;
            }
            chosen.pop();
            partner[atom] = None;
            partner[j] = None;
        }
        false
    }

    if !search(&pending, &adj, &mut partner, &mut chosen, &key, &mut budget) {
        let unmatched: Vec<usize> = pending.iter().copied().filter(|i| partner[*i].is_none()).collect();
        return Err(ChemError::Kekulize(if unmatched.is_empty() { pending } else { unmatched }));
    }
    for &b in candidates {
        g.bonds[b].order = BondOrder::Single;
    }
    for b in chosen {
        g.bonds[b].order = BondOrder::Double;
    }
    Ok(())
}

/// Pi electrons an atom donates to a ring, or `None` if it cannot be part of
/// an aromatic ring.
fn pi_electrons(g: &MolecularGraph, ring_bond: &[bool], adj: &[Vec<(usize, usize)>], i: usize) -> Option<u8> {
    let atom = &g.atoms[i];
    let mut doubles = 0;
    let mut contribution = None;
    for &(j, b) in &adj[i] {
        match g.bonds[b].order {
            BondOrder::Triple => return None,
            BondOrder::Double => {
                doubles += 1;
                contribution = if ring_bond[b] {
                    Some(1)
                } else if matches!(g.atoms[j].element, Element::O | Element::N | Element::S) {
                    Some(0)
                } else {
                    return None;
                };
            }
            _ => {}
        }
    }
    if doubles > 1 {
        return None;
    }
    if doubles == 1 {
        return contribution;
    }
    let conn = adj[i].len() as u8 + atom.hydrogens;
    match (atom.element, atom.formal_charge, conn) {
        (Element::N | Element::P, 0, 3) => Some(2),
        (Element::N, -1, 2) => Some(2),
        (Element::O | Element::S | Element::SE, 0, 2) => Some(2),
        (Element::C, -1, 3) => Some(2),
        (Element::C, 1, 3) => Some(0),
        (Element::B, 0, 3) => Some(0),
        _ => None,
    }
}

/// Simple cycles of length 5 or 6 over ring bonds, each as (atoms, bonds).
fn small_cycles(g: &MolecularGraph, ring_bond: &[bool]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = g.atoms.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (bi, b) in g.bonds.iter().enumerate() {
        if ring_bond[bi] {
            adj[b.a].push((b.b, bi));
            adj[b.b].push((b.a, bi));
        }
    }
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(6);
    let mut path_bonds = Vec::with_capacity(6);
    fn extend(
        start: usize,
        adj: &[Vec<(usize, usize)>],
        path: &mut Vec<usize>,
        path_bonds: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        let last = *path.last().unwrap();
        for &(j, b) in &adj[last] {
            if j == start && path.len() >= 5 && path[1] < last {
                let mut bonds = path_bonds.clone();
                bonds.push(b);
                out.push((path.clone(), bonds));
            } else if j > start && !path.contains(&j) && path.len() < 6 {
                path.push(j);
                path_bonds.push(b);
                extend(start, adj, path, path_bonds, out);
                path.pop();
                path_bonds.pop();
            }
        }
    }
    for s in 0..n {
        if adj[s].len() < 2 {
            continue;
        }
        path.clear();
        path_bonds.clear();
        path.push(s);
        extend(s, &adj, &mut path, &mut path_bonds, &mut out);
    }
    out
}

/// Marks atoms and bonds of aromatic 5/6-rings on a kekulé graph.
pub(crate) fn perceive(g: &mut MolecularGraph) {
    let ring_bond = g.ring_bonds();
    let adj = g.adjacency();
    let electrons: Vec<Option<u8>> = (0..g.atoms.len()).map(|i| pi_electrons(g, &ring_bond, &adj, i)).collect();
    let mut aromatic_atom = vec![false; g.atoms.len()];
    let mut aromatic_bond = vec![false; g.bonds.len()];
    for (atoms, bonds) in small_cycles(g, &ring_bond) {
        let total: Option<u32> = atoms.iter().map(|&i| electrons[i].map(u32::from)).sum();
        if let Some(t) = total {
            if t % 4 == 2 {
                for i in atoms {
                    aromatic_atom[i] = true;
                }
                for b in bonds {
                    aromatic_bond[b] = true;
                }
            }
        }
    }
    for (i, a) in g.atoms.iter_mut().enumerate() {
        a.aromatic = aromatic_atom[i];
    }
    for (bi, b) in g.bonds.iter_mut().enumerate() {
        if aromatic_bond[bi] {
            b.order = BondOrder::Aromatic;
            b.stereo = None;
        }
    }
}

/// Bonds written aromatic but not perceived as such keep a kekulé form; the
/// placement of their double bonds is re-chosen from canonical ranks so it does
/// not depend on atom order.
pub(crate) fn settle_unperceived(g: &mut MolecularGraph, input_aromatic: &[bool]) -> Result<(), ChemError> {
    let region: Vec<usize> = (0..g.bonds.len())
        .filter(|&b| input_aromatic[b] && g.bonds[b].order != BondOrder::Aromatic)
        .collect();
    if region.is_empty() {
        return Ok(());
    }
    let mut needs = vec![false; g.atoms.len()];
    for &b in &region {
        if g.bonds[b].order == BondOrder::Double {
            needs[g.bonds[b].a] = true;
            needs[g.bonds[b].b] = true;
        }
    }
    let mut neutral = g.clone();
    for &b in &region {
        neutral.bonds[b].order = BondOrder::Aromatic;
    }
    let ranks = canon::canonical_ranks(&neutral).ranks;
    assign_doubles(g, &region, &needs, Some(&ranks))
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;

    fn aromatic_count(s: &str) -> usize {
        parse_smiles(s).unwrap().atoms.iter().filter(|a| a.aromatic).count()
    }

    #[test]
    fn kekule_input_is_perceived() {
        assert_eq!(aromatic_count("C1=CC=CC=C1"), 6);
        assert_eq!(aromatic_count("C1=CC=CN=C1"), 6);
        assert_eq!(aromatic_count("C1=CNC=C1"), 5);
        assert_eq!(aromatic_count("C1=CSC=C1"), 5);
    }

    #[test]
    fn fused_and_heteroaromatic() {
        assert_eq!(aromatic_count("c1ccc2ccccc2c1"), 10);
        assert_eq!(aromatic_count("c1ccc2[nH]ccc2c1"), 9);
        assert_eq!(aromatic_count("O=c1cccc[nH]1"), 6);
        assert_eq!(aromatic_count("c1cc[n+](C)cc1"), 6);
    }

    #[test]
    fn non_aromatic_rings() {
        assert_eq!(aromatic_count("C1=CCC=C1"), 0);
        assert_eq!(aromatic_count("O=C1C=CC(=O)C=C1"), 0);
        assert_eq!(aromatic_count("C1CCCCC1"), 0);
    }
}
