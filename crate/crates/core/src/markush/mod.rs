//! Markush scaffold handling: resolving R-group substituents and zipping them
//! onto scaffold attachment points to enumerate explicit structures.

mod abbrev;
mod zip;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{parse_smiles, to_canonical_smiles, ChemError, MolecularGraph};
use crate::join::{StructureOrigin, StructureRecord};
use crate::record::Detection;

pub use abbrev::AbbreviationTable;
pub use zip::zip;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkushError {
    #[error("unknown abbreviation '{0}'")]
    UnknownAbbreviation(String),
    #[error("name-to-structure conversion failed for '{name}': {reason}")]
    NameClient { name: String, reason: String },
    #[error("no name-to-structure client configured for '{0}'")]
    NoNameClient(String),
    #[error("detection {0} has no recognized structure")]
    VisualIndexMissing(usize),
    #[error("fragment must have exactly one attachment point, found {0}")]
    AttachmentCount(usize),
    #[error("no substituent given for label {0}")]
    MissingLabel(String),
    #[error("label {0} does not occur on the scaffold")]
    UnknownLabel(String),
    #[error("empty substituent payload")]
    EmptyPayload,
    #[error("unsupported Markush construct: {0}")]
    Unsupported(String),
    #[error("scaffold has no attachment points")]
    NoAttachmentPoints,
    #[error("abbreviation table line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error(transparent)]
    Chem(#[from] ChemError),
}

impl MarkushError {
    /// Stable machine-readable category used in row failures.
    pub fn cause(&self) -> FailureCause {
        match self {
            MarkushError::UnknownAbbreviation(_) => FailureCause::UnknownAbbreviation,
            MarkushError::NameClient { .. } | MarkushError::NoNameClient(_) => FailureCause::NameResolution,
            MarkushError::VisualIndexMissing(_) => FailureCause::VisualIndexMissing,
            MarkushError::AttachmentCount(_) => FailureCause::AttachmentCount,
            MarkushError::MissingLabel(_) => FailureCause::MissingLabel,
            MarkushError::UnknownLabel(_) => FailureCause::UnknownLabel,
            MarkushError::Unsupported(_) | MarkushError::NoAttachmentPoints => FailureCause::UnsupportedMarkush,
            MarkushError::Chem(ChemError::Valence { .. }) => FailureCause::Valence,
            MarkushError::EmptyPayload | MarkushError::Table { .. } | MarkushError::Chem(_) => FailureCause::InvalidFragment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    UnknownAbbreviation,
    NameResolution,
    VisualIndexMissing,
    AttachmentCount,
    MissingLabel,
    UnknownLabel,
    UnsupportedMarkush,
    Valence,
    InvalidFragment,
}

/// A scaffold whose attachment points carry unique R-group labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkushScaffold {
    pub graph: MolecularGraph,
    pub labels: BTreeSet<String>,
}

impl MarkushScaffold {
    pub fn new(graph: MolecularGraph) -> Result<Self, MarkushError> {
        if graph.attachment_points.is_empty() {
            return Err(MarkushError::NoAttachmentPoints);
        }
        let labels = graph.attachment_points.iter().map(|a| a.label.clone()).collect();
        Ok(MarkushScaffold { graph, labels })
    }

    /// Parses a scaffold. A label used twice or a placeholder bonded on both
    /// sides describes a direct-bond substituent, which is not supported.
    pub fn from_smiles(smiles: &str) -> Result<Self, MarkushError> {
        match parse_smiles(smiles) {
            Ok(g) => Self::new(g),
            Err(ChemError::DuplicateLabel(l)) => Err(MarkushError::Unsupported(format!("label {l} occurs more than once"))),
            Err(ChemError::PlaceholderDegree { label, .. }) => {
                Err(MarkushError::Unsupported(format!("label {label} bonds on more than one side")))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// How an R-group is given in the source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Substituent {
    FragmentSmiles(String),
    /// Index of a detected depiction whose recognized structure is the fragment.
    VisualIndex(usize),
    IupacName(String),
    Abbreviation(String),
    Formula(String),
    Hydrogen,
}

impl Substituent {
    pub fn payload(&self) -> Option<String> {
        match self {
            Substituent::FragmentSmiles(s)
            | Substituent::IupacName(s)
            | Substituent::Abbreviation(s)
            | Substituent::Formula(s) => Some(s.clone()),
            Substituent::VisualIndex(i) => Some(i.to_string()),
            Substituent::Hydrogen => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RGroupRow {
    pub coreference: String,
    pub assignment: BTreeMap<String, Substituent>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RGroupTable {
    pub rows: Vec<RGroupRow>,
    /// Labels the document declares as hydrogen when a row leaves them out
    /// (an "R = H unless stated" footnote). Omitted labels not listed here fail
    /// the row.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub hydrogen_default: BTreeSet<String>,
}

/// Converts chemical names to SMILES (an OPSIN-style service).
pub trait NameToStructure: Send + Sync {
    fn name_to_smiles(&self, name: &str) -> Result<String, String>;
}

/// Previously recorded answers, for re-enumerating without a backend.
impl NameToStructure for BTreeMap<String, String> {
    fn name_to_smiles(&self, name: &str) -> Result<String, String> {
        self.get(name).cloned().ok_or_else(|| format!("no recorded structure for '{name}'"))
    }
}

/// A resolved substituent.
#[derive(Debug, Clone, PartialEq)]
pub enum Fragment {
    /// A group with exactly one attachment point.
    Group(MolecularGraph),
    /// Replace the attachment point by a hydrogen.
    Hydrogen,
}

impl Fragment {
    pub fn from_smiles(smiles: &str) -> Result<Fragment, MarkushError> {
        let g = parse_smiles(smiles)?;
        if g.attachment_points.len() != 1 {
            return Err(MarkushError::AttachmentCount(g.attachment_points.len()));
        }
        Ok(Fragment::Group(g))
    }

    /// Heavy atoms contributed to the product (the placeholder is consumed).
    pub fn contributed_atoms(&self) -> usize {
        match self {
            Fragment::Group(g) => g.atom_count() - 1,
            Fragment::Hydrogen => 0,
        }
    }
}

/// Turns a substituent description into a fragment.
pub fn resolve_substituent(
    s: &Substituent,
    abbrevs: &AbbreviationTable,
    names: Option<&dyn NameToStructure>,
    detections: &[Detection],
) -> Result<Fragment, MarkushError> {
    if let Some(p) = s.payload() {
        if p.trim().is_empty() {
            return Err(MarkushError::EmptyPayload);
        }
    }
    match s {
        Substituent::Hydrogen => Ok(Fragment::Hydrogen),
        Substituent::FragmentSmiles(text) => Fragment::from_smiles(text.trim()),
        Substituent::Abbreviation(key) | Substituent::Formula(key) => {
            let key = key.trim();
            if key == "H" {
                return Ok(Fragment::Hydrogen);
            }
            let smiles = abbrevs.lookup(key).ok_or_else(|| MarkushError::UnknownAbbreviation(key.to_string()))?;
            Fragment::from_smiles(smiles)
        }
        Substituent::IupacName(name) => {
            let client = names.ok_or_else(|| MarkushError::NoNameClient(name.clone()))?;
            let smiles = client
                .name_to_smiles(name)
                .map_err(|reason| MarkushError::NameClient { name: name.clone(), reason })?;
            Fragment::from_smiles(&smiles)
        }
        Substituent::VisualIndex(idx) => {
            let smiles = detections
                .iter()
                .find(|d| d.id == *idx)
                .and_then(|d| d.raw_smiles.as_deref())
                .ok_or(MarkushError::VisualIndexMissing(*idx))?;
            Fragment::from_smiles(smiles)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowFailure {
    pub row: usize,
    pub coreference: String,
    pub cause: FailureCause,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enumeration {
    pub records: Vec<StructureRecord>,
    pub failures: Vec<RowFailure>,
}

fn enumerate_row(
    scaffold: &MarkushScaffold,
    table: &RGroupTable,
    row: &RGroupRow,
    abbrevs: &AbbreviationTable,
    names: Option<&dyn NameToStructure>,
    detections: &[Detection],
) -> Result<String, MarkushError> {
    if let Some(extra) = row.assignment.keys().find(|k| !scaffold.labels.contains(*k)) {
        return Err(MarkushError::UnknownLabel(extra.clone()));
    }
    let mut resolved = BTreeMap::new();
    for label in &scaffold.labels {
        let fragment = match row.assignment.get(label) {
            Some(s) => resolve_substituent(s, abbrevs, names, detections)?,
            None if table.hydrogen_default.contains(label) => Fragment::Hydrogen,
            None => return Err(MarkushError::MissingLabel(label.clone())),
        };
        resolved.insert(label.clone(), fragment);
    }
    Ok(to_canonical_smiles(&zip(scaffold, &resolved)?))
}

/// Enumerates every row of an R-group table. Each row yields either a record
/// or a failure, in row order.
pub fn enumerate_rows(
    scaffold: &MarkushScaffold,
    scaffold_detection: usize,
    table: &RGroupTable,
    abbrevs: &AbbreviationTable,
    names: Option<&dyn NameToStructure>,
    detections: &[Detection],
) -> Enumeration {
    let outcomes: Vec<Result<String, MarkushError>> = table
        .rows
        .par_iter()
        .map(|row| enumerate_row(scaffold, table, row, abbrevs, names, detections))
        .collect();
    let mut out = Enumeration::default();
    for (i, (row, outcome)) in table.rows.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(smiles) if !row.coreference.trim().is_empty() => {
                let mut provenance = vec![scaffold_detection];
                for s in row.assignment.values() {
                    if let Substituent::VisualIndex(d) = s {
                        provenance.push(*d);
                    }
                }
                out.records.push(StructureRecord {
                    coreference: row.coreference.clone(),
                    smiles,
                    origin: StructureOrigin::MarkushRow { scaffold: scaffold_detection, row: i },
                    provenance,
                });
            }
            Ok(_) => out.failures.push(RowFailure {
                row: i,
                coreference: row.coreference.clone(),
                cause: FailureCause::InvalidFragment,
                message: "row has an empty coreference".into(),
            }),
            Err(e) => out.failures.push(RowFailure {
                row: i,
                coreference: row.coreference.clone(),
                cause: e.cause(),
                message: e.to_string(),
            }),
        }
    }
    out
}

/// Like [`enumerate_rows`] but starting from scaffold SMILES; a scaffold that
/// cannot be used fails every row with the same cause.
pub fn enumerate_smiles_rows(
    scaffold_smiles: &str,
    scaffold_detection: usize,
    table: &RGroupTable,
    abbrevs: &AbbreviationTable,
    names: Option<&dyn NameToStructure>,
    detections: &[Detection],
) -> Enumeration {
    match MarkushScaffold::from_smiles(scaffold_smiles) {
        Ok(s) => enumerate_rows(&s, scaffold_detection, table, abbrevs, names, detections),
        Err(e) => Enumeration {
            records: Vec::new(),
            failures: table
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| RowFailure {
                    row: i,
                    coreference: r.coreference.clone(),
                    cause: e.cause(),
                    message: e.to_string(),
                })
                .collect(),
        },
    }
}
