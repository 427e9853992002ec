//! Scoring predictions against gold annotations: triplet, structure and
//! measurement matching, annotation recall, detection AP, OCSR accuracy and
//! attribution of missed triplets to pipeline stages.

mod attribution;
mod detection;
mod matching;
mod score;

use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::chem::{canonicalize_smiles, ChemError};
use crate::measure::{AssayType, Modality, Relation};
use crate::scalar::Scalar;
use crate::PageBox;

pub use attribution::{attribute_errors, Attribution, ErrorSource};
pub use detection::{detection_ap, iou_thresholds, ApTable, ScoredBox};
pub use matching::{
    match_measurements, match_triplets, measurement_modality_counts, ocsr_accuracy, score_structures, topn_recall, triplet_attribute_counts,
    MarkushGranularity, MatchConfig, MatchResult, OcsrScore, StructureScores,
};
pub use score::{score, ScoredDoc, Task, OCSR_PAIR_IOU, RECALL_RANKS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A gold bioactivity triplet. Protein and ligand carry every accepted name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldTriplet {
    pub protein: Vec<String>,
    #[serde(default)]
    pub ligand: Vec<String>,
    pub smiles: String,
    pub assay_type: AssayType,
    #[serde(default)]
    pub relation: Relation,
    #[serde(rename = "value_nM")]
    pub value_nm: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStructure {
    pub coreference: String,
    pub smiles: String,
    #[serde(default)]
    pub markush: bool,
    /// Groups structures enumerated from the same scaffold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldMeasurement {
    pub protein: Vec<String>,
    /// Accepted spellings of the ligand coreference.
    pub ligand: Vec<String>,
    pub assay_type: AssayType,
    #[serde(default)]
    pub relation: Relation,
    #[serde(rename = "value_nM")]
    pub value_nm: Decimal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
}

/// A gold depiction box. `smiles` is what the box depicts (with attachment
/// points for a scaffold); `scaffold` links a scaffold box to its
/// enumerated structures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldBox {
    pub page: u32,
    #[serde(rename = "box")]
    pub bbox: PageBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smiles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold: Option<String>,
}

/// The correct triplet for an annotation query structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub query_smiles: String,
    pub triplet: GoldTriplet,
}

/// Gold annotations for one document; one JSON object per line in gold files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub doc_id: String,
    #[serde(default)]
    pub triplets: Vec<GoldTriplet>,
    #[serde(default)]
    pub structures: Vec<GoldStructure>,
    #[serde(default)]
    pub measurements: Vec<GoldMeasurement>,
    #[serde(default)]
    pub detections: Vec<GoldBox>,
    #[serde(default)]
    pub annotations: Vec<GoldAnnotation>,
}

#[derive(Debug, thiserror::Error)]
pub enum GoldError {
    #[error("{doc}: {what} has no names")]
    NoNames { doc: String, what: String },
    #[error("{doc}: invalid SMILES {smiles}: {source}")]
    Smiles { doc: String, smiles: String, source: ChemError },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

impl GoldRecord {
    /// Checks name lists and rewrites every SMILES in canonical form.
    pub fn canonicalized(mut self) -> Result<Self, GoldError> {
        let doc = self.doc_id.clone();
        let canon = |s: &mut String| -> Result<(), GoldError> {
            *s = canonicalize_smiles(s).map_err(|e| GoldError::Smiles { doc: doc.clone(), smiles: s.clone(), source: e })?;
            Ok(())
        };
        let named = |names: &[String], what: String| -> Result<(), GoldError> {
            if names.iter().all(|n| n.trim().is_empty()) {
                return Err(GoldError::NoNames { doc: doc.clone(), what });
            }
            Ok(())
        };
        for (i, t) in self.triplets.iter_mut().enumerate() {
            named(&t.protein, format!("triplet {i} protein"))?;
            canon(&mut t.smiles)?;
        }
        for a in self.annotations.iter_mut() {
            canon(&mut a.query_smiles)?;
            named(&a.triplet.protein, "annotation protein".into())?;
            canon(&mut a.triplet.smiles)?;
        }
        for s in self.structures.iter_mut() {
            canon(&mut s.smiles)?;
        }
        for (i, m) in self.measurements.iter().enumerate() {
            named(&m.protein, format!("measurement {i} protein"))?;
            named(&m.ligand, format!("measurement {i} ligand"))?;
        }
        for b in self.detections.iter_mut() {
            if let Some(s) = b.smiles.as_mut() {
                canon(s)?;
            }
        }
        Ok(self)
    }
}

/// Reads gold records, one JSON object per non-blank line.
pub fn read_gold_jsonl(text: &str) -> Result<Vec<GoldRecord>, GoldError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: GoldRecord = serde_json::from_str(l).map_err(|e| GoldError::Json { line: i + 1, source: e })?;
            rec.canonicalized()
        })
        .collect()
}

/// Raw match counts. Reports keep these so any aggregate can be recomputed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Scalar> Prf<T> {
    pub fn from_pr(precision: T, recall: T) -> Self {
        let s = precision + recall;
        let f1 = if s == T::zero() { T::zero() } else { T::lit(2.0) * precision * recall / s };
        Prf { precision, recall, f1 }
    }
}

impl Counts {
    /// Precision with no predictions is 1 (nothing is wrong), recall with no
    /// gold is 1 (nothing is missed); so an empty pair scores 1 throughout.
    pub fn prf<T: Scalar>(&self) -> Prf<T> {
        let precision = if self.tp + self.fp == 0 { T::one() } else { T::ratio(self.tp, self.tp + self.fp) };
        let recall = if self.tp + self.fn_ == 0 { T::one() } else { T::ratio(self.tp, self.tp + self.fn_) };
        Prf::from_pr(precision, recall)
    }
}

/// Precision, recall and F1 of a match.
pub fn prf<T: Scalar>(m: &MatchResult) -> Prf<T> {
    m.counts().prf()
}

/// Scores for one task, aggregated over documents both ways.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub counts: Counts,
    /// P/R/F1 of the summed counts.
    pub micro: Option<Prf<f64>>,
    /// Mean per-document P and R; F1 is derived from those means.
    #[serde(rename = "macro")]
    pub macro_: Option<Prf<f64>>,
    pub per_doc: BTreeMap<String, Counts>,
}

impl TaskReport {
    pub fn add(&mut self, doc: &str, c: Counts) {
        *self.per_doc.entry(doc.to_string()).or_default() += c;
        self.finish();
    }

    fn finish(&mut self) {
        self.counts = self.per_doc.values().copied().sum();
        self.micro = Some(self.counts.prf());
        let n = self.per_doc.len();
        self.macro_ = (n > 0).then(|| {
            let per: Vec<Prf<f64>> = self.per_doc.values().map(Counts::prf).collect();
            let p = per.iter().map(|x| x.precision).sum::<f64>() / n as f64;
            let r = per.iter().map(|x| x.recall).sum::<f64>() / n as f64;
            Prf::from_pr(p, r)
        });
    }
}

/// Everything a scoring run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub tasks: BTreeMap<String, TaskReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_attribute: BTreeMap<String, TaskReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_modality: BTreeMap<String, TaskReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recall_at: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<ApTable<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocsr: Option<OcsrScore<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Attribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Default for MetricReport {
    fn default() -> Self {
        MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            tasks: BTreeMap::new(),
            per_attribute: BTreeMap::new(),
            per_modality: BTreeMap::new(),
            recall_at: BTreeMap::new(),
            detection: None,
            ocsr: None,
            errors: None,
            notes: Vec::new(),
        }
    }
}

impl MetricReport {
    pub fn add(&mut self, task: &str, doc: &str, c: Counts) {
        self.tasks.entry(task.to_string()).or_default().add(doc, c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_conventions() {
        let p: Prf<f64> = Counts { tp: 2, fp: 1, fn_: 2 }.prf();
        assert_eq!((p.precision, p.recall), (2.0 / 3.0, 0.5));
        assert!((p.f1 - 4.0 / 7.0).abs() < 1e-12);
        let empty: Prf<f32> = Counts::default().prf();
        assert_eq!((empty.precision, empty.recall, empty.f1), (1.0, 1.0, 1.0));
        let none_found: Prf<f64> = Counts { tp: 0, fp: 0, fn_: 3 }.prf();
        assert_eq!((none_found.precision, none_found.recall, none_found.f1), (1.0, 0.0, 0.0));
        let all_wrong: Prf<f64> = Counts { tp: 0, fp: 2, fn_: 2 }.prf();
        assert_eq!(all_wrong.f1, 0.0);
    }

    #[test]
    fn macro_and_micro_differ() {
        let mut r = TaskReport::default();
        r.add("a", Counts { tp: 1, fp: 0, fn_: 0 });
        r.add("b", Counts { tp: 0, fp: 3, fn_: 3 });
        let micro = r.micro.unwrap();
        let macro_ = r.macro_.unwrap();
        assert_eq!(micro.precision, 0.25);
        assert_eq!(macro_.precision, 0.5);
        assert_eq!(r.counts, Counts { tp: 1, fp: 3, fn_: 3 });
    }
}
