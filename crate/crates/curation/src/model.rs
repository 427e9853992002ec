//! Review tasks, decisions and the append-only event log.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use bioextract_core::markush::{AbbreviationTable, Substituent};
use bioextract_core::measure::Measurement;
use bioextract_core::PageBox;

pub const SCHEMA_VERSION: u32 = 1;

/// Review queues, in the order reviewers work through them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStage {
    Detection,
    Ocsr,
    Coreference,
    Markush,
    Measurement,
    Annotation,
}

impl ReviewStage {
    pub const ALL: [ReviewStage; 6] = [
        ReviewStage::Detection,
        ReviewStage::Ocsr,
        ReviewStage::Coreference,
        ReviewStage::Markush,
        ReviewStage::Measurement,
        ReviewStage::Annotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReviewStage::Detection => "detection",
            ReviewStage::Ocsr => "ocsr",
            ReviewStage::Coreference => "coreference",
            ReviewStage::Markush => "markush",
            ReviewStage::Measurement => "measurement",
            ReviewStage::Annotation => "annotation",
        }
    }
}

impl fmt::Display for ReviewStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReviewStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ReviewStage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s}"))
    }
}

/// Stages recomputed locally from reviewed inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedStage {
    /// Structure assembly: explicit structures plus scaffold zipping.
    Markush,
    /// Measurement to structure join.
    Integration,
    /// Candidate ranking for annotation queries.
    Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Accepted,
    Edited,
    Rejected,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        self != TaskStatus::Pending
    }
}

/// The artifact slice a task reviews.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum TaskTarget {
    Detection(usize),
    /// Recognized structure of a detection.
    Ocsr(usize),
    /// Coreference entry of a detection.
    Coreference(usize),
    /// A structure added by a reviewer (index into the inserted list).
    InsertedStructure(usize),
    /// R-group table of a scaffold detection.
    Markush(usize),
    /// Index into the run's working measurement list.
    Measurement(usize),
    /// Index into the run's annotation queries.
    Annotation(usize),
}

impl TaskTarget {
    pub fn stage(self) -> ReviewStage {
        match self {
            TaskTarget::Detection(_) => ReviewStage::Detection,
            TaskTarget::Ocsr(_) => ReviewStage::Ocsr,
            TaskTarget::Coreference(_) | TaskTarget::InsertedStructure(_) => ReviewStage::Coreference,
            TaskTarget::Markush(_) => ReviewStage::Markush,
            TaskTarget::Measurement(_) => ReviewStage::Measurement,
            TaskTarget::Annotation(_) => ReviewStage::Annotation,
        }
    }

    fn slug(self) -> String {
        match self {
            TaskTarget::InsertedStructure(i) => format!("coreference.inserted-{i}"),
            TaskTarget::Detection(i)
            | TaskTarget::Ocsr(i)
            | TaskTarget::Coreference(i)
            | TaskTarget::Markush(i)
            | TaskTarget::Measurement(i)
            | TaskTarget::Annotation(i) => format!("{}.{i}", self.stage()),
        }
    }

    /// Task ids are `<run id>.<stage>.<n>`.
    pub fn task_id(self, run_id: &str) -> String {
        format!("{run_id}.{}", self.slug())
    }
}

/// Splits a task id into run id and the rest.
pub fn run_of_task(task_id: &str) -> Option<&str> {
    let mut parts = task_id.rsplitn(3, '.');
    let (_, _, run) = (parts.next()?, parts.next()?, parts.next()?);
    Some(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub id: String,
    pub run_id: String,
    pub stage: ReviewStage,
    pub target: TaskTarget,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor: Option<String>,
    pub created_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at_ms: Option<u64>,
    /// Added by a reviewer rather than produced by the pipeline.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    /// Replacement payload; its shape depends on the stage (see [`Edit`]).
    Edit { payload: Value },
}

/// One R-group cell replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellEdit {
    pub row: usize,
    pub label: String,
    pub substituent: Substituent,
}

/// Typed edit payloads, one shape per stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    Box(PageBox),
    Smiles(String),
    Coreference(String),
    Cells(Vec<CellEdit>),
    Measurement(Box<Measurement>),
    /// 1-based rank of the chosen candidate; `None` when none applies.
    Pick(Option<usize>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxPayload {
    #[serde(rename = "box")]
    bbox: PageBox,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SmilesPayload {
    smiles: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoreferencePayload {
    coreference: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellsPayload {
    cells: Vec<CellEdit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementPayload {
    measurement: Measurement,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PickPayload {
    pick: Option<usize>,
}

fn shaped<T: serde::de::DeserializeOwned>(payload: &Value, stage: ReviewStage) -> Result<T, String> {
    serde_json::from_value(payload.clone()).map_err(|e| format!("{stage} edit payload: {e}"))
}

impl Edit {
    /// Reads the payload shape for `stage` (content is validated later).
    pub fn parse(stage: ReviewStage, payload: &Value) -> Result<Edit, String> {
        Ok(match stage {
            ReviewStage::Detection => Edit::Box(shaped::<BoxPayload>(payload, stage)?.bbox),
            ReviewStage::Ocsr => Edit::Smiles(shaped::<SmilesPayload>(payload, stage)?.smiles),
            ReviewStage::Coreference => Edit::Coreference(shaped::<CoreferencePayload>(payload, stage)?.coreference),
            ReviewStage::Markush => Edit::Cells(shaped::<CellsPayload>(payload, stage)?.cells),
            ReviewStage::Measurement => Edit::Measurement(Box::new(shaped::<MeasurementPayload>(payload, stage)?.measurement)),
            ReviewStage::Annotation => Edit::Pick(shaped::<PickPayload>(payload, stage)?.pick),
        })
    }
}

/// A structure a reviewer adds by hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertedStructure {
    pub coreference: String,
    pub smiles: String,
}

/// Reviewer-added items. Only the coreference (structure) and measurement
/// stages accept inserts.
#[derive(Debug, Clone, PartialEq)]
pub enum Insert {
    Structure(InsertedStructure),
    Measurement(Box<Measurement>),
}

impl Insert {
    pub fn parse(stage: ReviewStage, payload: &Value) -> Result<Insert, String> {
        match stage {
            ReviewStage::Coreference => Ok(Insert::Structure(shaped(payload, stage)?)),
            ReviewStage::Measurement => Ok(Insert::Measurement(Box::new(shaped::<MeasurementPayload>(payload, stage)?.measurement))),
            other => Err(format!("the {other} stage does not accept inserts")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Decision {
        task: String,
        #[serde(flatten)]
        decision: Decision,
    },
    Insert {
        stage: ReviewStage,
        payload: Value,
    },
    /// Allows export while the stage still has pending tasks.
    Waive {
        stage: ReviewStage,
    },
    Recompute,
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvent {
    /// 1, 2, ... without gaps.
    pub seq: u64,
    /// Wall-clock milliseconds since the Unix epoch.
    pub at_ms: u64,
    pub editor: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The pipeline is still running.
    Processing,
    Ready,
    Failed,
}

/// `meta.json`: everything the state fold needs besides the initial record
/// and the events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub run_id: String,
    pub doc_id: String,
    pub source_digest: String,
    pub created_at_ms: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub annotation_queries: Vec<String>,
    pub abbreviations: AbbreviationTable,
}
