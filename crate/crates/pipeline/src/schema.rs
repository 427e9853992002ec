//! Request and response payloads for each backend. These JSON shapes are
//! this crate's contract with model servers.

use serde::{Deserialize, Serialize};

use bioextract_core::join::ProteinRecord;
use bioextract_core::markush::RGroupTable;
use bioextract_core::measure::Modality;
use bioextract_core::PageBox;

/// `parser`: turn a source file into a [`bioextract_core::record::ParsedDocument`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRequest {
    pub source_name: String,
    pub source_digest: String,
}

/// `detector`: find structure depictions on one page image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub page: u32,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedBox {
    #[serde(rename = "box")]
    pub bbox: PageBox,
    #[serde(default = "one")]
    pub score: f64,
    #[serde(default)]
    pub is_markush: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<DetectedBox>,
}

/// `ocsr`: read the structure inside one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsrRequest {
    pub page: u32,
    pub image: String,
    #[serde(rename = "box")]
    pub bbox: PageBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsrResponse {
    pub smiles: Option<String>,
}

/// A numbered box drawn on an augmented page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub label: u32,
    #[serde(rename = "box")]
    pub bbox: PageBox,
}

/// `reasoner` requests, told apart by `task`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ReasonerRequest {
    /// Name the depictions drawn as numbered boxes on the page.
    Coreference { page: u32, image: String, overlays: Vec<LabeledBox>, context: Vec<String> },
    /// Read the R-group table belonging to a scaffold. Visual-index
    /// substituents in the answer refer to overlay labels on the same page.
    Markush { page: u32, image: String, scaffold: LabeledBox, scaffold_smiles: String, overlays: Vec<LabeledBox>, context: Vec<String> },
    /// Extract bioactivity statements from one text segment, table or figure.
    Measurements {
        modality: Modality,
        page: u32,
        source: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        caption: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreferenceItem {
    pub label: u32,
    pub coreference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreferenceResponse {
    pub entries: Vec<CoreferenceItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkushResponse {
    pub table: RGroupTable,
}

/// One extracted statement; `value_text` is parsed locally ("IC50 = 5 nM").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedMeasurement {
    pub protein: String,
    pub ligand_coreference: String,
    pub value_text: String,
    /// Assay type implied by context, such as a table header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assay_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementsResponse {
    pub measurements: Vec<ExtractedMeasurement>,
}

/// `name_to_structure`: convert a chemical name into a fragment SMILES.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameRequest {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameResponse {
    #[serde(default)]
    pub smiles: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

/// `protein_db`: look up a protein mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProteinRequest {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProteinResponse {
    pub record: Option<ProteinRecord>,
}
