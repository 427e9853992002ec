//! The per-document extraction record and the document model it is built from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::join::{BioactivityTriplet, ProteinRecord, StructureRecord};
use crate::markush::{RGroupTable, RowFailure};
use crate::measure::Measurement;
use crate::PageBox;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Paragraph,
    Caption,
    TableText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSegment {
    pub id: String,
    pub text: String,
    pub page: u32,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageImage {
    pub page: u32,
    /// Reference to the rendered page (a path or URI).
    pub image: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Figure,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub page: u32,
    #[serde(rename = "box")]
    pub bbox: PageBox,
    pub kind: RegionKind,
    #[serde(default)]
    pub image: Option<String>,
    /// Id of the caption segment, when linked.
    #[serde(default)]
    pub caption: Option<String>,
}

/// Aligned text and layout for one document, as produced by the parser.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedDocument {
    pub doc_id: String,
    #[serde(default)]
    pub text_segments: Vec<TextSegment>,
    #[serde(default)]
    pub page_images: Vec<PageImage>,
    #[serde(default)]
    pub regions: Vec<Region>,
}

impl ParsedDocument {
    /// Boxes must be normalized to the page and refer to known pages.
    pub fn check(&self) -> Result<(), String> {
        for r in &self.regions {
            if !r.bbox.is_normalized() {
                return Err(format!("region {} has a box outside the page", r.id));
            }
            if !self.page_images.is_empty() && !self.page_images.iter().any(|p| p.page == r.page) {
                return Err(format!("region {} refers to unknown page {}", r.id, r.page));
            }
        }
        Ok(())
    }

    pub fn page_image(&self, page: u32) -> Option<&PageImage> {
        self.page_images.iter().find(|p| p.page == page)
    }
}

pub const FLAG_OCSR_INVALID: &str = "ocsr_invalid";
pub const FLAG_OCSR_FAILED: &str = "ocsr_failed";

/// A detected molecule depiction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: usize,
    pub page: u32,
    #[serde(rename = "box")]
    pub bbox: PageBox,
    #[serde(default = "one")]
    pub score: f64,
    #[serde(default)]
    pub raw_smiles: Option<String>,
    #[serde(default)]
    pub is_markush: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub detection: usize,
    #[serde(rename = "box")]
    pub bbox: PageBox,
    pub label: u32,
}

/// A page image with numbered boxes drawn over each detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPage {
    pub page: u32,
    pub image: String,
    pub overlays: Vec<Overlay>,
}

/// Overlay labels are 1, 2, ... in (page, y0, x0) order over all detections.
pub fn build_augmented_pages(parsed: &ParsedDocument, detections: &[Detection]) -> Vec<AugmentedPage> {
    let mut order: Vec<&Detection> = detections.iter().collect();
    order.sort_by(|a, b| {
        a.page
            .cmp(&b.page)
            .then(a.bbox.y0.total_cmp(&b.bbox.y0))
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
            .then(a.id.cmp(&b.id))
    });
    let mut pages: Vec<AugmentedPage> = Vec::new();
    for (i, d) in order.into_iter().enumerate() {
        let overlay = Overlay { detection: d.id, bbox: d.bbox, label: i as u32 + 1 };
        match pages.last_mut() {
            Some(p) if p.page == d.page => p.overlays.push(overlay),
            _ => pages.push(AugmentedPage {
                page: d.page,
                image: parsed.page_image(d.page).map(|p| p.image.clone()).unwrap_or_default(),
                overlays: vec![overlay],
            }),
        }
    }
    pages
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreferenceEntry {
    pub detection: usize,
    pub coreference: String,
}

/// A Markush scaffold and the R-group table that goes with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkushJob {
    pub scaffold: usize,
    pub table: RGroupTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Detect,
    Ocsr,
    Coreference,
    Markush,
    Measurement,
    Integration,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Parse, Stage::Detect, Stage::Ocsr, Stage::Coreference, Stage::Markush, Stage::Measurement, Stage::Integration];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Detect => "detect",
            Stage::Ocsr => "ocsr",
            Stage::Coreference => "coreference",
            Stage::Markush => "markush",
            Stage::Measurement => "measurement",
            Stage::Integration => "integration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    #[default]
    Pending,
    Running,
    Done,
    Failed,
    Skipped,
}

impl StageStatus {
    /// pending → running → done/failed; pending may also be skipped.
    pub fn can_become(self, next: StageStatus) -> bool {
        use StageStatus::*;
        matches!((self, next), (Pending, Running) | (Pending, Skipped) | (Running, Done) | (Running, Failed))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, StageStatus::Done | StageStatus::Failed | StageStatus::Skipped)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything known about one document's extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub schema_version: u32,
    pub doc_id: String,
    /// sha256 of the source document.
    pub source_digest: String,
    pub parsed: ParsedDocument,
    pub detections: Vec<Detection>,
    pub augmented_pages: Vec<AugmentedPage>,
    pub coreference_map: Vec<CoreferenceEntry>,
    pub markush_jobs: Vec<MarkushJob>,
    #[serde(default)]
    pub markush_failures: Vec<(usize, RowFailure)>,
    /// Name-to-structure answers used during enumeration, so enumeration can
    /// be repeated without the backend.
    #[serde(default)]
    pub name_resolutions: BTreeMap<String, String>,
    pub structures: Vec<StructureRecord>,
    pub measurements: Vec<Measurement>,
    pub triplets: Vec<BioactivityTriplet>,
    #[serde(default)]
    pub unmatched_measurements: Vec<usize>,
    #[serde(default)]
    pub unmatched_structures: Vec<usize>,
    pub stages: BTreeMap<Stage, StageState>,
    /// Backend name → version used for this record.
    #[serde(default)]
    pub backends: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: BTreeMap<String, u64>,
    /// Optional enrichment keyed by protein mention.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub proteins: BTreeMap<String, ProteinRecord>,
}

impl ExtractionRecord {
    pub fn new(doc_id: &str, source_digest: &str) -> Self {
        ExtractionRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            doc_id: doc_id.to_string(),
            source_digest: source_digest.to_string(),
            parsed: ParsedDocument { doc_id: doc_id.to_string(), ..Default::default() },
            detections: Vec::new(),
            augmented_pages: Vec::new(),
            coreference_map: Vec::new(),
            markush_jobs: Vec::new(),
            markush_failures: Vec::new(),
            name_resolutions: BTreeMap::new(),
            structures: Vec::new(),
            measurements: Vec::new(),
            triplets: Vec::new(),
            unmatched_measurements: Vec::new(),
            unmatched_structures: Vec::new(),
            stages: Stage::ALL.iter().map(|s| (*s, StageState::default())).collect(),
            backends: BTreeMap::new(),
            warnings: BTreeMap::new(),
            proteins: BTreeMap::new(),
        }
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stages.get(&stage).map(|s| s.status).unwrap_or_default()
    }

    /// Moves a stage forward; illegal transitions are ignored and reported.
    pub fn set_status(&mut self, stage: Stage, next: StageStatus, error: Option<String>) -> bool {
        let entry = self.stages.entry(stage).or_default();
        if !entry.status.can_become(next) {
            return false;
        }
        entry.status = next;
        entry.error = error;
        true
    }

    pub fn warn(&mut self, counter: &str) {
        *self.warnings.entry(counter.to_string()).or_default() += 1;
    }

    pub fn detection(&self, id: usize) -> Option<&Detection> {
        self.detections.iter().find(|d| d.id == id)
    }

    /// Every triplet points at an existing structure and measurement.
    pub fn provenance_resolves(&self) -> bool {
        self.triplets.iter().all(|t| {
            t.provenance.structure < self.structures.len() && t.provenance.measurement < self.measurements.len()
        })
    }

    /// Triplets as JSONL, one record per line.
    pub fn triplets_jsonl(&self) -> String {
        triplets_jsonl(&self.triplets)
    }
}

pub fn triplets_jsonl(triplets: &[BioactivityTriplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        out.push_str(&serde_json::to_string(t).expect("triplet serializes"));
        out.push('\n');
    }
    out
}
