//! One-to-one matching of predictions to gold items.

use std::collections::{BTreeMap, BTreeSet};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{Counts, GoldMeasurement, GoldStructure, GoldTriplet};
use crate::chem::{canonical_for, parse_smiles, StereoMode};
use crate::join::{normalize_coreference, AnnotationCandidate, BioactivityTriplet, StructureOrigin, StructureRecord};
use crate::measure::NormalizedMeasurement;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkushGranularity {
    /// Enumerated structures are paired within matched scaffolds.
    #[default]
    PerScaffold,
    /// All enumerated structures of a document form one multiset.
    PerPaper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Allowed relative deviation of the nanomolar value from gold.
    pub rel_tol: Decimal,
    pub stereo: StereoMode,
    /// Compare protein names ignoring case.
    pub ignore_protein_case: bool,
    /// Maximum-cardinality assignment instead of the greedy one.
    pub optimal: bool,
    pub markush_granularity: MarkushGranularity,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            rel_tol: Decimal::new(1, 3),
            stereo: StereoMode::Sensitive,
            ignore_protein_case: true,
            optimal: false,
            markush_granularity: MarkushGranularity::PerScaffold,
        }
    }
}

/// A one-to-one pairing of prediction and gold indices. Unpaired items on
/// either side are listed in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gold: Vec<usize>,
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts { tp: self.pairs.len(), fp: self.unmatched_pred.len(), fn_: self.unmatched_gold.len() }
    }

    fn from_pairs(n_pred: usize, n_gold: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let used_p: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let used_g: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        MatchResult {
            pairs,
            unmatched_pred: (0..n_pred).filter(|i| !used_p.contains(i)).collect(),
            unmatched_gold: (0..n_gold).filter(|i| !used_g.contains(i)).collect(),
        }
    }
}

/// Assigns over candidate edges listed in priority order.
fn assign(n_pred: usize, n_gold: usize, edges: &[(usize, usize)], optimal: bool) -> MatchResult {
    if !optimal {
        let (mut used_p, mut used_g) = (vec![false; n_pred], vec![false; n_gold]);
        let mut pairs = Vec::new();
        for &(p, g) in edges {
            if !used_p[p] && !used_g[g] {
                used_p[p] = true;
                used_g[g] = true;
                pairs.push((p, g));
            }
        }
        return MatchResult::from_pairs(n_pred, n_gold, pairs);
    }
    let mut adj = vec![Vec::new(); n_pred];
    for &(p, g) in edges {
        adj[p].push(g);
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_gold];
    fn augment(p: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &g in &adj[p] {
            if !seen[g] {
                seen[g] = true;
                if owner[g].is_none_or(|q| augment(q, adj, seen, owner)) {
                    owner[g] = Some(p);
                    return true;
                }
            }
        }
        false
    }
    let mut order: Vec<usize> = (0..n_pred).collect();
    order.sort_by_key(|&p| edges.iter().position(|e| e.0 == p).unwrap_or(usize::MAX));
    for p in order {
        let mut seen = vec![false; n_gold];
        augment(p, &adj, &mut seen, &mut owner);
    }
    let pairs = owner.iter().enumerate().filter_map(|(g, p)| p.map(|p| (p, g))).collect();
    MatchResult::from_pairs(n_pred, n_gold, pairs)
}

fn canon(smiles: &str, mode: StereoMode) -> Option<String> {
    parse_smiles(smiles).ok().map(|g| canonical_for(&g, mode))
}

fn within_tol(pred: Option<Decimal>, gold: Decimal, tol: Decimal) -> bool {
    pred.is_some_and(|v| (v - gold).abs() <= tol * gold.abs())
}

/// Whether a predicted protein name is one of the gold names, and whether it
/// matches one verbatim.
fn protein_match(pred: &str, names: &[String], cfg: &MatchConfig) -> (bool, bool) {
    let exact = names.iter().any(|n| n == pred);
    let loose = exact || (cfg.ignore_protein_case && names.iter().any(|n| n.to_lowercase() == pred.to_lowercase()));
    (loose, exact)
}

#[derive(Clone, Copy)]
struct Fields {
    protein: bool,
    ligand: bool,
    assay: bool,
    value: bool,
}

const ALL_FIELDS: Fields = Fields { protein: true, ligand: true, assay: true, value: true };

fn triplet_edges(pred: &[BioactivityTriplet], gold: &[GoldTriplet], cfg: &MatchConfig, f: Fields) -> Vec<(usize, usize)> {
    let pred_canon: Vec<Option<String>> = pred.iter().map(|t| canon(&t.smiles, cfg.stereo)).collect();
    let gold_canon: Vec<Option<String>> = gold.iter().map(|t| canon(&t.smiles, cfg.stereo)).collect();
    let mut edges: Vec<(bool, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        let Some(pc) = &pred_canon[i] else { continue };
        for (j, g) in gold.iter().enumerate() {
            let (prot, exact) = protein_match(&p.protein, &g.protein, cfg);
            let ok = (!f.protein || prot)
                && (!f.ligand || gold_canon[j].as_ref() == Some(pc))
                && (!f.assay || p.assay_type == g.assay_type)
                && (!f.value || within_tol(p.value_nm, g.value_nm, cfg.rel_tol));
            if ok {
                edges.push((!exact, i, j));
            }
        }
    }
    edges.sort_unstable();
    edges.into_iter().map(|(_, i, j)| (i, j)).collect()
}

/// Pairs predicted triplets with gold triplets. A pair needs a protein
/// listed among the gold names, the same molecule, the same assay type and
/// a nanomolar value within the relative tolerance. Greedy assignment
/// prefers verbatim protein names, then document order.
pub fn match_triplets(pred: &[BioactivityTriplet], gold: &[GoldTriplet], cfg: &MatchConfig) -> MatchResult {
    assign(pred.len(), gold.len(), &triplet_edges(pred, gold, cfg, ALL_FIELDS), cfg.optimal)
}

/// Counts when only one attribute of the triplet is compared.
pub fn triplet_attribute_counts(
    pred: &[BioactivityTriplet],
    gold: &[GoldTriplet],
    cfg: &MatchConfig,
) -> BTreeMap<String, Counts> {
    let none = Fields { protein: false, ligand: false, assay: false, value: false };
    [
        ("protein", Fields { protein: true, ..none }),
        ("ligand", Fields { ligand: true, ..none }),
        ("assay_type", Fields { assay: true, ..none }),
        ("value", Fields { value: true, ..none }),
    ]
    .into_iter()
    .map(|(name, f)| {
        let m = assign(pred.len(), gold.len(), &triplet_edges(pred, gold, cfg, f), cfg.optimal);
        (name.to_string(), m.counts())
    })
    .collect()
}

/// Pairs measurements on protein, ligand coreference, assay type and value.
pub fn match_measurements(pred: &[NormalizedMeasurement], gold: &[GoldMeasurement], cfg: &MatchConfig) -> MatchResult {
    let gold_keys: Vec<BTreeSet<String>> =
        gold.iter().map(|g| g.ligand.iter().map(|n| normalize_coreference(n)).collect()).collect();
    let mut edges: Vec<(bool, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        let key = normalize_coreference(&p.base.ligand_coreference);
        for (j, g) in gold.iter().enumerate() {
            let (prot, exact) = protein_match(&p.base.protein, &g.protein, cfg);
            if prot
                && !key.is_empty()
                && gold_keys[j].contains(&key)
                && p.base.assay_type == g.assay_type
                && within_tol(p.value_nm, g.value_nm, cfg.rel_tol)
            {
                edges.push((!exact, i, j));
            }
        }
    }
    edges.sort_unstable();
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|(_, i, j)| (i, j)).collect();
    assign(pred.len(), gold.len(), &edges, cfg.optimal)
}

/// Splits a measurement match by modality: matched and missed gold items
/// count under the gold modality when known, spurious predictions under
/// their own.
pub fn measurement_modality_counts(
    pred: &[NormalizedMeasurement],
    gold: &[GoldMeasurement],
    m: &MatchResult,
) -> BTreeMap<String, Counts> {
    let mut out: BTreeMap<String, Counts> = BTreeMap::new();
    let name = |x: crate::measure::Modality| serde_json::to_value(x).ok().and_then(|v| v.as_str().map(str::to_string));
    let gold_mod = |j: usize, fallback: Option<usize>| {
        gold[j].modality.or_else(|| fallback.map(|i| pred[i].base.modality)).and_then(name).unwrap_or_else(|| "unknown".into())
    };
    for &(i, j) in &m.pairs {
        out.entry(gold_mod(j, Some(i))).or_default().tp += 1;
    }
    for &i in &m.unmatched_pred {
        out.entry(name(pred[i].base.modality).unwrap_or_default()).or_default().fp += 1;
    }
    for &j in &m.unmatched_gold {
        out.entry(gold_mod(j, None)).or_default().fn_ += 1;
    }
    out
}

/// Structure recognition scores, with and without coreference keys, for all
/// structures and for the explicit and enumerated subsets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureScores {
    pub with_coreference: Counts,
    pub without_coreference: Counts,
    pub full_with_coreference: Counts,
    pub full_without_coreference: Counts,
    pub markush_with_coreference: Counts,
    pub markush_without_coreference: Counts,
    /// Granularity actually used for the enumerated subset.
    pub markush_granularity: MarkushGranularity,
}

/// Matches two multisets; invalid keys (`None`) never match.
fn multiset_counts<K: Ord + Clone>(pred: &[Option<K>], gold: &[Option<K>]) -> Counts {
    let mut bag: BTreeMap<K, usize> = BTreeMap::new();
    for k in gold.iter().flatten() {
        *bag.entry(k.clone()).or_default() += 1;
    }
    let mut tp = 0;
    for k in pred.iter().flatten() {
        if let Some(n) = bag.get_mut(k) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    Counts { tp, fp: pred.len() - tp, fn_: gold.len() - tp }
}

fn is_markush(s: &StructureRecord) -> bool {
    matches!(s.origin, StructureOrigin::MarkushRow { .. })
}

pub fn score_structures(pred: &[StructureRecord], gold: &[GoldStructure], cfg: &MatchConfig) -> StructureScores {
    let p_smiles: Vec<Option<String>> = pred.iter().map(|s| canon(&s.smiles, cfg.stereo)).collect();
    let g_smiles: Vec<Option<String>> = gold.iter().map(|s| canon(&s.smiles, cfg.stereo)).collect();
    let keyed = |key: &str, smiles: &Option<String>| smiles.as_ref().map(|s| (normalize_coreference(key), s.clone()));
    let p_keyed: Vec<Option<(String, String)>> = pred.iter().zip(&p_smiles).map(|(s, c)| keyed(&s.coreference, c)).collect();
    let g_keyed: Vec<Option<(String, String)>> = gold.iter().zip(&g_smiles).map(|(s, c)| keyed(&s.coreference, c)).collect();

    let pick = |v: &[Option<String>], mask: &dyn Fn(usize) -> bool| -> Vec<Option<String>> {
        v.iter().enumerate().filter(|(i, _)| mask(*i)).map(|(_, x)| x.clone()).collect()
    };
    let pick_keyed = |v: &[Option<(String, String)>], mask: &dyn Fn(usize) -> bool| -> Vec<Option<(String, String)>> {
        v.iter().enumerate().filter(|(i, _)| mask(*i)).map(|(_, x)| x.clone()).collect()
    };
    let p_full = |i: usize| !is_markush(&pred[i]);
    let p_mk = |i: usize| is_markush(&pred[i]);
    let g_full = |j: usize| !gold[j].markush;
    let g_mk = |j: usize| gold[j].markush;

    let per_scaffold = cfg.markush_granularity == MarkushGranularity::PerScaffold
        && gold.iter().filter(|g| g.markush).all(|g| g.scaffold.is_some());
    let markush_without = if per_scaffold {
        scaffold_counts(pred, &p_smiles, gold, &g_smiles)
    } else {
        multiset_counts(&pick(&p_smiles, &p_mk), &pick(&g_smiles, &g_mk))
    };
    StructureScores {
        with_coreference: multiset_counts(&p_keyed, &g_keyed),
        without_coreference: multiset_counts(&p_smiles, &g_smiles),
        full_with_coreference: multiset_counts(&pick_keyed(&p_keyed, &p_full), &pick_keyed(&g_keyed, &g_full)),
        full_without_coreference: multiset_counts(&pick(&p_smiles, &p_full), &pick(&g_smiles, &g_full)),
        markush_with_coreference: multiset_counts(&pick_keyed(&p_keyed, &p_mk), &pick_keyed(&g_keyed, &g_mk)),
        markush_without_coreference: markush_without,
        markush_granularity: if per_scaffold { MarkushGranularity::PerScaffold } else { MarkushGranularity::PerPaper },
    }
}

/// Pairs predicted scaffold groups with gold scaffold groups greedily by
/// shared structures, then counts within paired groups.
fn scaffold_counts(
    pred: &[StructureRecord],
    p_smiles: &[Option<String>],
    gold: &[GoldStructure],
    g_smiles: &[Option<String>],
) -> Counts {
    let mut pg: BTreeMap<usize, Vec<Option<String>>> = BTreeMap::new();
    for (s, c) in pred.iter().zip(p_smiles) {
        if let StructureOrigin::MarkushRow { scaffold, .. } = s.origin {
            pg.entry(scaffold).or_default().push(c.clone());
        }
    }
    let mut gg: BTreeMap<String, Vec<Option<String>>> = BTreeMap::new();
    for (s, c) in gold.iter().zip(g_smiles) {
        if s.markush {
            gg.entry(s.scaffold.clone().unwrap_or_default()).or_default().push(c.clone());
        }
    }
    let mut cells: Vec<(usize, &String, usize)> = Vec::new();
    for (gk, gv) in &gg {
        for (pk, pv) in &pg {
            let tp = multiset_counts(pv, gv).tp;
            if tp > 0 {
                cells.push((tp, gk, *pk));
            }
        }
    }
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
    let (mut used_g, mut used_p) = (BTreeSet::new(), BTreeSet::new());
    let mut tp = 0;
    for (n, gk, pk) in cells {
        if !used_g.contains(gk) && !used_p.contains(&pk) {
            used_g.insert(gk);
            used_p.insert(pk);
            tp += n;
        }
    }
    let n_pred: usize = pg.values().map(Vec::len).sum();
    let n_gold: usize = gg.values().map(Vec::len).sum();
    Counts { tp, fp: n_pred - tp, fn_: n_gold - tp }
}

fn triplet_hits_gold(t: &BioactivityTriplet, g: &GoldTriplet, cfg: &MatchConfig) -> bool {
    !triplet_edges(std::slice::from_ref(t), std::slice::from_ref(g), cfg, ALL_FIELDS).is_empty()
}

/// Fraction of queries whose gold triplet appears among the first `n`
/// ranked candidates, for each `n`. No queries gives 1.
pub fn topn_recall<T: Scalar>(
    queries: &[(Vec<AnnotationCandidate>, GoldTriplet)],
    ns: &[usize],
    cfg: &MatchConfig,
) -> BTreeMap<usize, T> {
    let first_hit: Vec<Option<usize>> = queries
        .iter()
        .map(|(cands, gold)| {
            cands.iter().filter(|c| triplet_hits_gold(&c.triplet, gold, cfg)).map(|c| c.rank).min()
        })
        .collect();
    ns.iter()
        .map(|&n| {
            let hits = first_hit.iter().filter(|r| r.is_some_and(|r| r <= n)).count();
            let v = if queries.is_empty() { T::one() } else { T::ratio(hits, queries.len()) };
            (n, v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct OcsrScore<T> {
    pub total: usize,
    pub correct: usize,
    pub chiral_total: usize,
    pub chiral_correct: usize,
    /// Zero when there is nothing to score.
    pub accuracy: T,
    pub chiral_accuracy: T,
}

/// Accuracy over (prediction, gold) pairs; a missing or unparsable
/// prediction is wrong. The chiral subset holds gold molecules with at least
/// one tetrahedral stereo tag.
pub fn ocsr_accuracy<T: Scalar>(pairs: &[(Option<String>, String)], mode: StereoMode) -> OcsrScore<T> {
    let (mut total, mut correct, mut chiral_total, mut chiral_correct) = (0, 0, 0, 0);
    for (pred, gold) in pairs {
        let g = parse_smiles(gold).ok();
        let chiral = g.as_ref().is_some_and(|g| g.has_tetrahedral_stereo());
        let ok = match (pred.as_deref().and_then(|p| parse_smiles(p).ok()), &g) {
            (Some(p), Some(g)) => crate::chem::molecules_equal(&p, g, mode),
            _ => false,
        };
        total += 1;
        correct += ok as usize;
        if chiral {
            chiral_total += 1;
            chiral_correct += ok as usize;
        }
    }
    OcsrScore {
        total,
        correct,
        chiral_total,
        chiral_correct,
        accuracy: T::ratio(correct, total),
        chiral_accuracy: T::ratio(chiral_correct, chiral_total),
    }
}

