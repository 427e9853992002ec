//! Joining measurements to structures through normalized ligand
//! coreference keys, ranking joined records against a query structure and
//! optional protein enrichment.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::chem::{circular_fingerprint, parse_smiles, to_canonical_smiles, ChemError, FingerprintParams};
use crate::measure::{AssayType, NormalizedMeasurement, Relation, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureOrigin {
    Explicit,
    MarkushRow { scaffold: usize, row: usize },
    /// Added by a reviewer; no depiction backs it.
    Curated,
}

/// A ligand: its coreference key as written in the document and its
/// canonical SMILES.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub coreference: String,
    pub smiles: String,
    pub origin: StructureOrigin,
    /// Detection ids the structure was built from.
    pub provenance: Vec<usize>,
}

static MARKUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)</?(?:b|i|em|strong|sub|sup)>|\*\*|\*|__").expect("markup pattern"));
static WRAPPED_UNDERSCORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)_([^_\s][^_]*)_(?:\s|$)").unwrap());
const LEADING: &[&str] = &["compound", "compd", "cmpd.", "cmpd", "inhibitor", "ligand", "example", "no.", "no", "#"];

/// Normalizes a ligand coreference (e.g. "**Compound 12a.**" → "12a").
/// Idempotent.
pub fn normalize_coreference(text: &str) -> String {
    let mut s = text.to_string();
    loop {
        let before = s.clone();
        s = MARKUP.replace_all(&s, "").into_owned();
        s = WRAPPED_UNDERSCORE.replace_all(&s, " $1 ").into_owned();
        s = s.to_lowercase();
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
        loop {
            let mut changed = false;
            for tok in LEADING {
                if let Some(rest) = s.strip_prefix(tok) {
                    // whole-word tokens need a separator; "#" and "no." may touch the label
                    let glued_ok = tok.ends_with('.') || *tok == "#";
                    if rest.starts_with(' ') || (glued_ok && !rest.is_empty()) {
                        s = rest.trim_start().to_string();
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        s = s.trim_end_matches(['.', ',', ';', ':', '!', '?']).trim().to_string();
        if s == before {
            return s;
        }
    }
}

/// A joined (protein, ligand, value) record, serialized as one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioactivityTriplet {
    pub protein: String,
    pub smiles: String,
    pub assay_type: AssayType,
    pub relation: Relation,
    pub value: Decimal,
    pub unit: Unit,
    #[serde(rename = "value_nM")]
    pub value_nm: Option<Decimal>,
    pub p_value: Option<f64>,
    pub join_key: String,
    pub provenance: TripletProvenance,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletProvenance {
    pub structure: usize,
    pub measurement: usize,
}

pub const FLAG_AMBIGUOUS: &str = "ambiguous";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinResult {
    pub triplets: Vec<BioactivityTriplet>,
    /// Indices of measurements that joined nothing.
    pub unmatched_measurements: Vec<usize>,
    /// Indices of structures no measurement joined.
    pub unmatched_structures: Vec<usize>,
}

/// Exact-key join. A measurement whose key matches several structures joins
/// all of them and every resulting triplet is flagged ambiguous. Empty keys
/// never join.
pub fn join(measurements: &[NormalizedMeasurement], structures: &[StructureRecord]) -> JoinResult {
    let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in structures.iter().enumerate() {
        let key = normalize_coreference(&s.coreference);
        if !key.is_empty() {
            by_key.entry(key).or_default().push(i);
        }
    }
    let mut used = vec![false; structures.len()];
    let mut out = JoinResult::default();
    for (mi, m) in measurements.iter().enumerate() {
        let key = normalize_coreference(&m.base.ligand_coreference);
        let Some(hits) = by_key.get(&key).filter(|_| !key.is_empty()) else {
            out.unmatched_measurements.push(mi);
            continue;
        };
        let flags = if hits.len() > 1 { vec![FLAG_AMBIGUOUS.to_string()] } else { Vec::new() };
        for &si in hits {
            used[si] = true;
            out.triplets.push(BioactivityTriplet {
                protein: m.base.protein.clone(),
                smiles: structures[si].smiles.clone(),
                assay_type: m.base.assay_type.clone(),
                relation: m.base.relation,
                value: m.base.value,
                unit: m.base.unit.clone(),
                value_nm: m.value_nm,
                p_value: m.p_value,
                join_key: key.clone(),
                provenance: TripletProvenance { structure: si, measurement: mi },
                flags: flags.clone(),
            });
        }
    }
    out.unmatched_structures = (0..structures.len()).filter(|&i| !used[i]).collect();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationCandidate {
    pub triplet: BioactivityTriplet,
    /// Position of the triplet in the ranked input.
    pub index: usize,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
    pub exact_match: bool,
    pub perfect_match: bool,
}

/// Ranks triplets by ligand similarity to a query structure. Ties keep exact
/// canonical matches first, then sort by join key.
pub fn rank_for_annotation(
    triplets: &[BioactivityTriplet],
    query_smiles: &str,
    params: &FingerprintParams,
) -> Result<Vec<AnnotationCandidate>, ChemError> {
    let query = parse_smiles(query_smiles)?;
    let query_canon = to_canonical_smiles(&query);
    let query_fp = circular_fingerprint(&query, params)?;
    let mut cands: Vec<AnnotationCandidate> = triplets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (similarity, exact) = match parse_smiles(&t.smiles) {
                Ok(g) => {
                    let sim = circular_fingerprint(&g, params)
                        .and_then(|fp| query_fp.tanimoto::<f64>(&fp))
                        .unwrap_or(0.0);
                    (sim, to_canonical_smiles(&g) == query_canon)
                }
                Err(_) => (0.0, false),
            };
            AnnotationCandidate { triplet: t.clone(), index: i, similarity, rank: 0, exact_match: exact, perfect_match: similarity == 1.0 }
        })
        .collect();
    cands.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(b.exact_match.cmp(&a.exact_match))
            .then_with(|| a.triplet.join_key.cmp(&b.triplet.join_key))
            .then(a.index.cmp(&b.index))
    });
    for (r, c) in cands.iter_mut().enumerate() {
        c.rank = r + 1;
    }
    Ok(cands)
}

/// What the annotated structure is known by.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationContext {
    pub protein: String,
    pub structure_title: String,
}

/// Chooses among perfect matches; returns the index into the slice it was given.
pub trait AnnotationPicker: Send + Sync {
    fn pick(&self, candidates: &[AnnotationCandidate], context: &AnnotationContext) -> Result<Option<usize>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub candidate: Option<AnnotationCandidate>,
    pub reason: String,
}

const STOP_TOKENS: &[&str] = &[
    "a", "an", "and", "the", "of", "in", "with", "by", "for", "to", "on", "from", "complex", "structure", "crystal",
    "bound", "protein", "human", "domain", "inhibitor", "compound",
];

fn tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOP_TOKENS.contains(t))
        .map(str::to_string)
        .collect()
}

/// Picks one perfect match consistent with the context, or abstains.
pub fn select_annotation(
    ranked: &[AnnotationCandidate],
    context: &AnnotationContext,
    picker: Option<&dyn AnnotationPicker>,
) -> Selection {
    let perfect: Vec<AnnotationCandidate> = ranked.iter().filter(|c| c.perfect_match).cloned().collect();
    if perfect.is_empty() {
        return Selection { candidate: None, reason: "no perfect structural match".into() };
    }
    if let Some(p) = picker {
        return match p.pick(&perfect, context) {
            Ok(Some(i)) if i < perfect.len() => Selection { candidate: Some(perfect[i].clone()), reason: "picker".into() },
            Ok(Some(i)) => Selection { candidate: None, reason: format!("picker returned out-of-range index {i}") },
            Ok(None) => Selection { candidate: None, reason: "picker abstained".into() },
            Err(e) => Selection { candidate: None, reason: format!("picker failed: {e}") },
        };
    }
    let context_tokens: Vec<String> = tokens(&format!("{} {}", context.protein, context.structure_title));
    for c in &perfect {
        if tokens(&c.triplet.protein).iter().any(|t| context_tokens.contains(t)) {
            return Selection { candidate: Some(c.clone()), reason: "protein overlaps context".into() };
        }
    }
    Selection { candidate: None, reason: "no perfect match shares a protein token with the context".into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProteinRecord {
    pub name: String,
    #[serde(default)]
    pub identifiers: BTreeMap<String, String>,
    #[serde(default)]
    pub structures: Vec<String>,
}

/// Public protein database lookups (UniProt, PDB and similar).
pub trait ProteinDb: Send + Sync {
    fn lookup(&self, name: &str) -> Result<Option<ProteinRecord>, String>;
}

/// Cache-first protein enrichment backed by one JSON file per name.
#[derive(Debug)]
pub struct ProteinEnricher {
    cache_dir: PathBuf,
    write_lock: Mutex<()>,
    warnings: AtomicU64,
}

fn protein_key(name: &str) -> String {
    name.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl ProteinEnricher {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        ProteinEnricher { cache_dir: cache_dir.into(), write_lock: Mutex::new(()), warnings: AtomicU64::new(0) }
    }

    pub fn warnings(&self) -> u64 {
        self.warnings.load(Ordering::Relaxed)
    }

    fn path(&self, key: &str) -> PathBuf {
        use std::hash::Hasher;
        let mut h = fnv::FnvHasher::default();
        h.write(key.as_bytes());
        let stem: String =
            key.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).take(48).collect();
        self.cache_dir.join(format!("{stem}-{:016x}.json", h.finish()))
    }

    pub fn cached(&self, name: &str) -> Option<ProteinRecord> {
        let text = std::fs::read_to_string(self.path(&protein_key(name))).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn enrich(&self, name: &str, db: Option<&dyn ProteinDb>) -> Option<ProteinRecord> {
        let key = protein_key(name);
        if key.is_empty() {
            return None;
        }
        if let Some(r) = self.cached(&key) {
            return Some(r);
        }
        let db = db?;
        match db.lookup(&key) {
            Ok(Some(record)) => {
                let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
                let stored = std::fs::create_dir_all(&self.cache_dir)
                    .and_then(|_| std::fs::write(self.path(&key), serde_json::to_vec_pretty(&record).expect("record serializes")));
                if let Err(e) = stored {
                    log::warn!("could not cache protein record for {key}: {e}");
                    self.warnings.fetch_add(1, Ordering::Relaxed);
                }
                Some(record)
            }
            Ok(None) => None,
            Err(e) => {
                log::warn!("protein lookup for {key} failed: {e}");
                self.warnings.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }
}
