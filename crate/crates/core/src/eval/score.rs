//! Whole-corpus scoring: one task over paired prediction and gold documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    attribute_errors, detection_ap, iou_thresholds, match_measurements, match_triplets, measurement_modality_counts, ocsr_accuracy,
    score_structures, topn_recall, triplet_attribute_counts, Attribution, Counts, GoldRecord, GoldTriplet, MarkushGranularity,
    MatchConfig, MetricReport, ScoredBox,
};
use crate::chem::FingerprintParams;
use crate::join::{rank_for_annotation, AnnotationCandidate};
use crate::measure::normalize_lenient;
use crate::record::ExtractionRecord;

/// Ranks reported for annotation recall.
pub const RECALL_RANKS: [usize; 3] = [1, 3, 10];

/// IoU a predicted box needs to be paired with a gold box for OCSR scoring.
pub const OCSR_PAIR_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Triplet,
    Structure,
    Measurement,
    Annotation,
    Detection,
    Ocsr,
    Errors,
}

impl Task {
    pub const ALL: [Task; 7] =
        [Task::Triplet, Task::Structure, Task::Measurement, Task::Annotation, Task::Detection, Task::Ocsr, Task::Errors];

    pub fn name(self) -> &'static str {
        match self {
            Task::Triplet => "triplet",
            Task::Structure => "structure",
            Task::Measurement => "measurement",
            Task::Annotation => "annotation",
            Task::Detection => "detection",
            Task::Ocsr => "ocsr",
            Task::Errors => "errors",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            format!("unknown task {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// A gold document with its prediction; documents the system never
/// produced a record for are scored against an empty record.
pub struct ScoredDoc<'a> {
    pub pred: &'a ExtractionRecord,
    pub gold: &'a GoldRecord,
}

/// Scores `task` over the documents; per-document counts are kept so micro
/// and macro aggregates can both be read off the report.
pub fn score(task: Task, docs: &[ScoredDoc<'_>], cfg: &MatchConfig) -> MetricReport {
    let mut report = MetricReport::default();
    match task {
        Task::Triplet => {
            for d in docs {
                let doc = &d.gold.doc_id;
                report.add("triplet", doc, match_triplets(&d.pred.triplets, &d.gold.triplets, cfg).counts());
                for (attr, c) in triplet_attribute_counts(&d.pred.triplets, &d.gold.triplets, cfg) {
                    report.per_attribute.entry(attr).or_default().add(doc, c);
                }
            }
        }
        Task::Structure => {
            let mut fell_back = false;
            for d in docs {
                let doc = &d.gold.doc_id;
                let s = score_structures(&d.pred.structures, &d.gold.structures, cfg);
                fell_back |= s.markush_granularity != cfg.markush_granularity;
                for (name, c) in [
                    ("structure_with_coreference", s.with_coreference),
                    ("structure_without_coreference", s.without_coreference),
                    ("full_structure_with_coreference", s.full_with_coreference),
                    ("full_structure_without_coreference", s.full_without_coreference),
                    ("markush_with_coreference", s.markush_with_coreference),
                    ("markush_without_coreference", s.markush_without_coreference),
                ] {
                    report.add(name, doc, c);
                }
            }
            if fell_back && cfg.markush_granularity == MarkushGranularity::PerScaffold {
                report.notes.push("some gold Markush structures lack a scaffold id; those documents were scored per paper".into());
            }
        }
        Task::Measurement => {
            for d in docs {
                let doc = &d.gold.doc_id;
                let pred: Vec<_> = d.pred.measurements.iter().map(normalize_lenient).collect();
                let m = match_measurements(&pred, &d.gold.measurements, cfg);
                report.add("measurement", doc, m.counts());
                for (modality, c) in measurement_modality_counts(&pred, &d.gold.measurements, &m) {
                    report.per_modality.entry(modality).or_default().add(doc, c);
                }
            }
        }
        Task::Annotation => {
            let params = FingerprintParams::default();
            let mut all: Vec<(Vec<AnnotationCandidate>, GoldTriplet)> = Vec::new();
            for d in docs {
                let queries: Vec<(Vec<AnnotationCandidate>, GoldTriplet)> = d
                    .gold
                    .annotations
                    .iter()
                    .map(|a| {
                        let ranked = rank_for_annotation(&d.pred.triplets, &a.query_smiles, &params).unwrap_or_default();
                        (ranked, a.triplet.clone())
                    })
                    .collect();
                let n = queries.len();
                for (rank, r) in topn_recall::<f64>(&queries, &RECALL_RANKS, cfg) {
                    // Recall over n queries is a multiple of 1/n.
                    let hits = if n == 0 { 0 } else { (r * n as f64).round() as usize };
                    report.add(&format!("annotation@{rank}"), &d.gold.doc_id, Counts { tp: hits, fp: 0, fn_: n - hits });
                }
                all.extend(queries);
            }
            report.recall_at = topn_recall(&all, &RECALL_RANKS, cfg);
        }
        Task::Detection => {
            let image = |doc: &str, page: u32| format!("{doc}#{page}");
            let pred: Vec<ScoredBox<f64>> = docs
                .iter()
                .flat_map(|d| {
                    d.pred.detections.iter().map(|b| ScoredBox { image: image(&d.gold.doc_id, b.page), bbox: b.bbox, score: b.score })
                })
                .collect();
            let gold: Vec<_> =
                docs.iter().flat_map(|d| d.gold.detections.iter().map(|b| (image(&d.gold.doc_id, b.page), b.bbox))).collect();
            report.detection = Some(detection_ap(&pred, &gold, &iou_thresholds()));
        }
        Task::Ocsr => {
            let pairs: Vec<(Option<String>, String)> = docs
                .iter()
                .flat_map(|d| {
                    d.gold.detections.iter().filter_map(|g| g.smiles.clone().map(|s| (g, s))).map(|(g, smiles)| {
                        let best = d
                            .pred
                            .detections
                            .iter()
                            .filter(|p| p.page == g.page)
                            .map(|p| (p.bbox.iou(&g.bbox), p))
                            .filter(|(iou, _)| *iou >= OCSR_PAIR_IOU)
                            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.id.cmp(&a.1.id)));
                        (best.and_then(|(_, p)| p.raw_smiles.clone()), smiles)
                    })
                })
                .collect();
            report.ocsr = Some(ocsr_accuracy(&pairs, cfg.stereo));
        }
        Task::Errors => {
            let mut total = Attribution::default();
            for d in docs {
                total.merge(&attribute_errors(d.pred, d.gold, cfg));
            }
            report.errors = Some(total);
        }
    }
    report
}
