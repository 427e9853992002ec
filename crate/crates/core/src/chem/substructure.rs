//! Substructure search by backtracking.
//!
//! Placeholder atoms in the query match any atom of the target, which lets a
//! scaffold with open attachment points be checked against its products.

use super::graph::{BondOrder, MolecularGraph};

fn atoms_compatible(q: &MolecularGraph, qi: usize, t: &MolecularGraph, ti: usize) -> bool {
    let (qa, ta) = (&q.atoms[qi], &t.atoms[ti]);
    if qa.element.is_placeholder() {
        return true;
    }
    qa.element == ta.element && qa.aromatic == ta.aromatic && qa.formal_charge == ta.formal_charge
}

fn bonds_compatible(q: BondOrder, t: BondOrder) -> bool {
    q == t
}

/// First mapping of query atoms onto target atoms, if any.
pub fn find_substructure(target: &MolecularGraph, query: &MolecularGraph) -> Option<Vec<usize>> {
    let nq = query.atoms.len();
    if nq == 0 {
        return Some(Vec::new());
    }
    if nq > target.atoms.len() {
        return None;
    }
    let qadj = query.adjacency();
    let tadj = target.adjacency();
    // visit query atoms in BFS order so each (after the first per component) has a mapped neighbour
    let mut order = Vec::with_capacity(nq);
    let mut seen = vec![false; nq];
    for s in 0..nq {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut head = order.len();
        order.push(s);
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, _) in &qadj[u] {
                if !seen[v] {
                    seen[v] = true;
                    order.push(v);
                }
            }
        }
    }
    let mut map = vec![usize::MAX; nq];
    let mut used = vec![false; target.atoms.len()];

    fn step(
        k: usize,
        order: &[usize],
        q: &MolecularGraph,
        t: &MolecularGraph,
        qadj: &[Vec<(usize, usize)>],
        tadj: &[Vec<(usize, usize)>],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if k == order.len() {
            return true;
        }
        let qi = order[k];
        let anchor = qadj[qi].iter().find(|(j, _)| map[*j] != usize::MAX).copied();
        let candidates: Vec<usize> = match anchor {
            Some((j, _)) => tadj[map[j]].iter().map(|&(x, _)| x).collect(),
            None => (0..t.atoms.len()).collect(),
        };
        for ti in candidates {
            if used[ti] || !atoms_compatible(q, qi, t, ti) || tadj[ti].len() < qadj[qi].len() {
                continue;
            }
            let ok = qadj[qi].iter().all(|&(qj, qb)| {
                if map[qj] == usize::MAX {
                    return true;
                }
                match t.bond_between(ti, map[qj]) {
                    Some(tb) => bonds_compatible(q.bonds[qb].order, t.bonds[tb].order),
                    None => false,
                }
            });
            if !ok {
                continue;
            }
            map[qi] = ti;
            used[ti] = true;
            if step(k + 1, order, q, t, qadj, tadj, map, used) {
                return true;
            }
            map[qi] = usize::MAX;
            used[ti] = false;
        }
        false
    }

    if step(0, &order, query, target, &qadj, &tadj, &mut map, &mut used) {
        Some(map)
    } else {
        None
    }
}

pub fn has_substructure(target: &MolecularGraph, query: &MolecularGraph) -> bool {
    find_substructure(target, query).is_some()
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    #[test]
    fn finds_ring_in_larger_molecule() {
        let t = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        assert!(has_substructure(&t, &parse_smiles("c1ccccc1").unwrap()));
        assert!(has_substructure(&t, &parse_smiles("NC(C)=O").unwrap()));
        assert!(!has_substructure(&t, &parse_smiles("C1CCCCC1").unwrap()));
    }

    #[test]
    fn placeholders_match_anything() {
        let t = parse_smiles("O=C(NC)c1ccc(Cl)cc1").unwrap();
        let core = parse_smiles("O=C(N[*:1])c1ccc([*:2])cc1").unwrap();
        assert!(has_substructure(&t, &core));
    }
}
