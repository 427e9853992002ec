//! Assigning each missed gold triplet to the earliest stage that lost it.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{match_triplets, GoldRecord, GoldTriplet, MatchConfig};
use crate::chem::{canonical_for, parse_smiles};
use crate::join::{normalize_coreference, StructureOrigin};
use crate::measure::normalize_lenient;
use crate::record::{ExtractionRecord, Stage, StageStatus};

const DETECTION_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    Detection,
    Ocsr,
    Coreference,
    Markush,
    Measurement,
    Integration,
    /// A stage needed for the test never produced output.
    Unknown,
}

/// Histogram of error sources over the false-negative gold triplets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub false_negatives: usize,
    pub counts: BTreeMap<ErrorSource, usize>,
    /// Exact fractions of `false_negatives`, written as "n/d".
    #[serde(serialize_with = "ser_ratios", deserialize_with = "de_ratios")]
    pub fractions: BTreeMap<ErrorSource, Ratio<usize>>,
    /// (document, gold triplet index, source) for every false negative.
    pub per_triplet: Vec<(String, usize, ErrorSource)>,
}

fn ser_ratios<S: Serializer>(m: &BTreeMap<ErrorSource, Ratio<usize>>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k, v.to_string())))
}

fn de_ratios<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ErrorSource, Ratio<usize>>, D::Error> {
    let raw = BTreeMap::<ErrorSource, String>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| v.parse::<Ratio<usize>>().map(|r| (k, r)).map_err(serde::de::Error::custom))
        .collect()
}

impl Attribution {
    fn push(&mut self, doc: &str, index: usize, source: ErrorSource) {
        self.per_triplet.push((doc.to_string(), index, source));
        *self.counts.entry(source).or_default() += 1;
        self.false_negatives += 1;
        self.refresh();
    }

    fn refresh(&mut self) {
        let total = self.false_negatives;
        self.fractions = self.counts.iter().map(|(k, &n)| (*k, Ratio::new(n, total))).collect();
    }

    /// Adds another document's attribution.
    pub fn merge(&mut self, other: &Attribution) {
        for (doc, i, s) in &other.per_triplet {
            self.push(doc, *i, *s);
        }
    }

    /// Sum of the fractions; exactly one whenever there is a false negative.
    pub fn fraction_sum(&self) -> Ratio<usize> {
        self.fractions.values().fold(Ratio::from_integer(0), |a, b| a + b)
    }
}

fn ran(record: &ExtractionRecord, stage: Stage) -> bool {
    !matches!(record.status(stage), StageStatus::Pending | StageStatus::Running)
}

fn source_for(record: &ExtractionRecord, gold: &GoldRecord, gt: &GoldTriplet, cfg: &MatchConfig) -> ErrorSource {
    let canon = |s: &str| parse_smiles(s).ok().map(|g| canonical_for(&g, cfg.stereo));
    let target = canon(&gt.smiles);
    let gold_structure = gold.structures.iter().find(|s| canon(&s.smiles) == target);
    let markush = gold_structure.is_some_and(|s| s.markush);
    let relevant: Vec<_> = gold
        .detections
        .iter()
        .filter(|b| match gold_structure {
            Some(s) if s.markush => s.scaffold.is_some() && b.scaffold == s.scaffold,
            _ => b.smiles.as_deref().and_then(canon) == target,
        })
        .collect();

    if !relevant.is_empty() {
        if !ran(record, Stage::Detect) {
            return ErrorSource::Unknown;
        }
        let found: Vec<_> = record
            .detections
            .iter()
            .filter(|d| relevant.iter().any(|b| b.page == d.page && d.bbox.iou(&b.bbox) >= DETECTION_IOU))
            .collect();
        if found.is_empty() {
            return ErrorSource::Detection;
        }
        let depicted: BTreeSet<String> = relevant.iter().filter_map(|b| b.smiles.as_deref().and_then(canon)).collect();
        if !depicted.is_empty() {
            if !ran(record, Stage::Ocsr) {
                return ErrorSource::Unknown;
            }
            let read_right = found.iter().any(|d| d.raw_smiles.as_deref().and_then(canon).is_some_and(|s| depicted.contains(&s)));
            if !read_right {
                return ErrorSource::Ocsr;
            }
        }
    }

    if !ran(record, Stage::Coreference) || (markush && !ran(record, Stage::Markush)) {
        return ErrorSource::Unknown;
    }
    let names: BTreeSet<String> = gt.ligand.iter().map(|n| normalize_coreference(n)).filter(|n| !n.is_empty()).collect();
    let same_molecule: Vec<_> = record.structures.iter().filter(|s| canon(&s.smiles) == target).collect();
    let structure_side = |found_markush: bool| if found_markush || markush { ErrorSource::Markush } else { ErrorSource::Coreference };
    if same_molecule.is_empty() {
        return structure_side(false);
    }
    if !names.is_empty() && !same_molecule.iter().any(|s| names.contains(&normalize_coreference(&s.coreference))) {
        let from_table = same_molecule.iter().any(|s| matches!(s.origin, StructureOrigin::MarkushRow { .. }));
        return structure_side(from_table);
    }

    if !ran(record, Stage::Measurement) {
        return ErrorSource::Unknown;
    }
    let measured = record.measurements.iter().map(normalize_lenient).any(|m| {
        let protein_ok = gt.protein.iter().any(|p| p.to_lowercase() == m.base.protein.to_lowercase());
        let key_ok = names.is_empty() || names.contains(&normalize_coreference(&m.base.ligand_coreference));
        let value_ok = m.value_nm.is_some_and(|v| (v - gt.value_nm).abs() <= cfg.rel_tol * gt.value_nm.abs());
        protein_ok && key_ok && m.base.assay_type == gt.assay_type && value_ok
    });
    if !measured {
        return ErrorSource::Measurement;
    }
    if !ran(record, Stage::Integration) {
        return ErrorSource::Unknown;
    }
    ErrorSource::Integration
}

/// Attributes every gold triplet the record missed. The cascade tests, in
/// order: a detection overlapping the depiction, a correct reading of it, a
/// structure under an accepted name, a matching measurement; a triplet that
/// passes all four was lost in the join.
pub fn attribute_errors(record: &ExtractionRecord, gold: &GoldRecord, cfg: &MatchConfig) -> Attribution {
    let m = match_triplets(&record.triplets, &gold.triplets, cfg);
    let mut out = Attribution::default();
    for &j in &m.unmatched_gold {
        out.push(&gold.doc_id, j, source_for(record, gold, &gold.triplets[j], cfg));
    }
    out
}
