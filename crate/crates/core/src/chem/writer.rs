//! Canonical SMILES output.

use std::fmt::Write as _;

use super::canon::CanonInfo;
use super::graph::{BondOrder, Chirality, DoubleBondConfig, MolecularGraph, Slot};
use super::smiles::{implicit_hydrogens, Dir};

struct Layout {
    order: Vec<usize>,
    parent_bond: Vec<Option<usize>>,
    children: Vec<Vec<(usize, usize)>>,
    ring_open: Vec<Vec<usize>>,
    ring_close: Vec<Vec<usize>>,
    /// Atom at which each bond's symbol is written.
    written_from: Vec<usize>,
}

fn layout(g: &MolecularGraph, ranks: &[usize]) -> (Layout, Vec<usize>) {
    let n = g.atoms.len();
    let mut adj = g.adjacency();
    for list in &mut adj {
        list.sort_by_key(|&(j, _)| ranks[j]);
    }
    let mut l = Layout {
        order: Vec::with_capacity(n),
        parent_bond: vec![None; n],
        children: vec![Vec::new(); n],
        ring_open: vec![Vec::new(); n],
        ring_close: vec![Vec::new(); n],
        written_from: vec![usize::MAX; g.bonds.len()],
    };
    let mut visited = vec![false; n];
    let mut used = vec![false; g.bonds.len()];
    let mut roots = Vec::new();
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&i| ranks[i]);

    // explicit stack of (atom, next neighbour index) keeps deep chains safe
    for &root in &by_rank {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        l.order.push(root);
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (u, ref mut k)) = stack.last_mut() {
            if *k >= adj[u].len() {
                stack.pop();
                continue;
            }
            let (v, b) = adj[u][*k];
            *k += 1;
            if used[b] {
                continue;
            }
            used[b] = true;
            if visited[v] {
                l.ring_open[v].push(b);
                l.ring_close[u].push(b);
                l.written_from[b] = v;
            } else {
                visited[v] = true;
                l.order.push(v);
                l.parent_bond[v] = Some(b);
                l.children[u].push((v, b));
                l.written_from[b] = u;
                stack.push((v, 0));
            }
        }
    }
    (l, roots)
}

/// Assigns '/' and '\' to single bonds so every kept double-bond
/// configuration is expressed. Directions are relative to `written_from`.
fn assign_directions(g: &MolecularGraph, info: &CanonInfo, l: &Layout, pos: &[usize]) -> Vec<Option<Dir>> {
    let mut dirs: Vec<Option<Dir>> = vec![None; g.bonds.len()];
    let adj = g.adjacency();
    let mut stereo: Vec<usize> = (0..g.bonds.len()).filter(|&b| info.stereo_bonds[b] && g.bonds[b].stereo.is_some()).collect();
    stereo.sort_by_key(|&b| pos[g.bonds[b].a].min(pos[g.bonds[b].b]));

    for sb in stereo {
        let bond = &g.bonds[sb];
        let st = bond.stereo.unwrap();
        // orient the double bond by write position so the result does not
        // depend on how the input stored it
        let (a, b, ref_a, ref_b) = if pos[bond.a] <= pos[bond.b] {
            (bond.a, bond.b, st.ref_a, st.ref_b)
        } else {
            (bond.b, bond.a, st.ref_b, st.ref_a)
        };
        let side = |atom: usize, partner: usize| -> Vec<(usize, usize)> {
            let mut v: Vec<(usize, usize)> = adj[atom]
                .iter()
                .copied()
                .filter(|&(j, b)| j != partner && g.bonds[b].order == BondOrder::Single)
                .collect();
            v.sort_by_key(|&(j, _)| pos[j]);
            v
        };
        let sa = side(a, b);
        let sbs = side(b, a);
        if sa.is_empty() || sbs.is_empty() {
            continue;
        }
        let pick = |s: &[(usize, usize)]| s.iter().copied().find(|&(_, e)| dirs[e].is_some()).unwrap_or(s[0]);
        let (x, bx) = pick(&sa);
        let (y, by) = pick(&sbs);
        let cfg = st.config.flipped_if(x != ref_a).flipped_if(y != ref_b);
        // stored directions read along the written direction; convert to
        // dir(x -> a) and dir(b -> y), which agree exactly for trans
        let as_xa = |d: Dir| if l.written_from[bx] == x { d } else { d.flip() };
        let as_by = |d: Dir| if l.written_from[by] == b { d } else { d.flip() };
        let xa = match (dirs[bx], dirs[by]) {
            (Some(d), _) => as_xa(d),
            (None, Some(d)) => {
                let by_dir = as_by(d);
                let xa = if cfg == DoubleBondConfig::Trans { by_dir } else { by_dir.flip() };
                dirs[bx] = Some(as_xa(xa));
                xa
            }
            (None, None) => {
                dirs[bx] = Some(Dir::Up);
                as_xa(Dir::Up)
            }
        };
        let want_by = if cfg == DoubleBondConfig::Trans { xa } else { xa.flip() };
        let stored = as_by(want_by);
        match dirs[by] {
            None => dirs[by] = Some(stored),
            Some(d) if d == stored => {}
            Some(_) => log::debug!("cis/trans on bond {sb} cannot be expressed with directional bonds"),
        }
    }
    dirs
}

fn bond_symbol(g: &MolecularGraph, b: usize, dir: Option<Dir>, out: &mut String) {
    let bond = &g.bonds[b];
    match bond.order {
        BondOrder::Single => match dir {
            Some(d) => out.push(d.symbol()),
            None if g.atoms[bond.a].aromatic && g.atoms[bond.b].aromatic => out.push('-'),
            None => {}
        },
        BondOrder::Double => out.push('='),
        BondOrder::Triple => out.push('#'),
        BondOrder::Aromatic => {}
    }
}

fn ring_digit(d: usize, out: &mut String) {
    if d < 10 {
        let _ = write!(out, "{d}");
    } else {
        let _ = write!(out, "%{d}");
    }
}

fn placeholder_text(label: Option<&str>) -> String {
    match label {
        Some("R") => "[R]".into(),
        Some(l) if l.len() > 1 && l.starts_with('R') && l[1..].bytes().all(|c| c.is_ascii_digit()) => {
            format!("[*:{}]", &l[1..])
        }
        _ => "*".into(),
    }
}

fn atom_text(g: &MolecularGraph, i: usize, chirality: Chirality) -> String {
    let atom = &g.atoms[i];
    if atom.element.is_placeholder() {
        return placeholder_text(g.attachment_label(i));
    }
    let mut sym = atom.element.symbol().to_string();
    if atom.aromatic {
        sym = sym.to_ascii_lowercase();
    }
    let organic = atom.element.organic_valences().is_some() && (!atom.aromatic || sym.len() == 1);
    let implicit = implicit_hydrogens(atom.element, atom.aromatic, g.bond_valence_sum(i));
    let needs_bracket = !organic
        || atom.formal_charge != 0
        || atom.isotope.is_some()
        || chirality != Chirality::None
        || implicit != Some(atom.hydrogens);
    if !needs_bracket {
        return sym;
    }
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        let _ = write!(s, "{iso}");
    }
    s.push_str(&sym);
    match chirality {
        Chirality::CounterClockwise => s.push('@'),
        Chirality::Clockwise => s.push_str("@@"),
        Chirality::None => {}
    }
    match atom.hydrogens {
        0 => {}
        1 => s.push('H'),
        h => {
            let _ = write!(s, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => {
            let _ = write!(s, "+{c}");
        }
        c => {
            let _ = write!(s, "-{}", -c);
        }
    }
    s.push(']');
    s
}

/// Writes the canonical SMILES of a graph whose ranks are already known.
pub(crate) fn write_with(g: &MolecularGraph, info: &CanonInfo) -> String {
    let (l, roots) = layout(g, &info.ranks);
    let mut pos = vec![0; g.atoms.len()];
    for (p, &a) in l.order.iter().enumerate() {
        pos[a] = p;
    }
    let dirs = assign_directions(g, info, &l, &pos);
    let mut out = String::new();
    let mut digits: Vec<Option<usize>> = vec![None; g.bonds.len()];
    // digit 0 is never used
    let mut in_use: Vec<bool> = vec![true];

    enum Step {
        Atom(usize),
        Open,
        Close,
    }
    for (ci, &root) in roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        let mut stack = vec![Step::Atom(root)];
        while let Some(step) = stack.pop() {
            let u = match step {
                Step::Open => {
                    out.push('(');
                    continue;
                }
                Step::Close => {
                    out.push(')');
                    continue;
                }
                Step::Atom(u) => u,
            };
            let parent = l.parent_bond[u];
            if let Some(b) = parent {
                bond_symbol(g, b, dirs[b], &mut out);
            }
            let mut slots = Vec::with_capacity(4);
            if let Some(b) = parent {
                slots.push(Slot::Atom(g.bonds[b].other(u)));
            }
            if g.atoms[u].hydrogens > 0 {
                slots.push(Slot::Hydrogen);
            }
            for &b in l.ring_close[u].iter().chain(&l.ring_open[u]) {
                slots.push(Slot::Atom(g.bonds[b].other(u)));
            }
            for &(c, _) in &l.children[u] {
                slots.push(Slot::Atom(c));
            }
            let chir = if info.stereo_atoms[u] { g.chirality_in_order(u, &slots) } else { Chirality::None };
            out.push_str(&atom_text(g, u, chir));

            let mut freed = Vec::new();
            for &b in &l.ring_close[u] {
                let d = digits[b].expect("ring opened before it closes");
                ring_digit(d, &mut out);
                freed.push(d);
            }
            for &b in &l.ring_open[u] {
                let d = match in_use.iter().position(|x| !x) {
                    Some(p) => p,
                    None => {
                        in_use.push(false);
                        in_use.len() - 1
                    }
                };
                in_use[d] = true;
                digits[b] = Some(d);
                bond_symbol(g, b, dirs[b], &mut out);
                ring_digit(d, &mut out);
            }
            for d in freed {
                in_use[d] = false;
            }
            if let Some((&(last, _), rest)) = l.children[u].split_last() {
                stack.push(Step::Atom(last));
                for &(c, _) in rest.iter().rev() {
                    stack.push(Step::Close);
                    stack.push(Step::Atom(c));
                    stack.push(Step::Open);
                }
            }
        }
    }
    out
}

/// Writes a valid, non-canonical SMILES that visits atoms by `priority`
/// (lower first). Useful for producing alternative spellings in tests.
pub(crate) fn write_in_order(g: &MolecularGraph, priority: &[usize]) -> String {
    let mut info = super::canon::canonical_ranks(g);
    info.ranks = priority.to_vec();
    write_with(g, &info)
}
