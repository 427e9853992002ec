//! Run state as a pure fold of the review log over the initial record.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use bioextract_core::chem::{parse_smiles, to_canonical_smiles, FingerprintParams};
use bioextract_core::join::{join, rank_for_annotation, AnnotationCandidate, BioactivityTriplet, StructureOrigin, StructureRecord};
use bioextract_core::markush::{enumerate_smiles_rows, resolve_substituent, AbbreviationTable, RGroupTable};
use bioextract_core::measure::{normalize_lenient, Measurement};
use bioextract_core::record::{ExtractionRecord, FLAG_OCSR_FAILED, FLAG_OCSR_INVALID};
use bioextract_pipeline::{dedup_structures, explicit_structures};

use crate::error::CurationError;
use crate::model::*;

/// Detection flag set when a reviewer rejects the depiction itself.
pub const FLAG_REJECTED: &str = "rejected";
/// Detection flag set when a reviewer rejects the recognized structure.
pub const FLAG_OCSR_REJECTED: &str = "ocsr_rejected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementItem {
    pub measurement: Measurement,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rejected: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertedItem {
    pub structure: InsertedStructure,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationState {
    pub query_smiles: String,
    pub candidates: Vec<AnnotationCandidate>,
    /// The chosen triplet as it was when picked.
    pub pick: Option<BioactivityTriplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pick_rank: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub edited: usize,
    pub rejected: usize,
}

impl TaskCounts {
    fn add(&mut self, status: TaskStatus) {
        self.total += 1;
        match status {
            TaskStatus::Pending => self.pending += 1,
            TaskStatus::Accepted => self.accepted += 1,
            TaskStatus::Edited => self.edited += 1,
            TaskStatus::Rejected => self.rejected += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub schema_version: u32,
    pub run_id: String,
    pub doc_id: String,
    pub source_digest: String,
    pub created_at_ms: u64,
    /// The curated record; derived parts reflect the last recompute.
    pub record: ExtractionRecord,
    pub tasks: Vec<ReviewTask>,
    pub measurements: Vec<MeasurementItem>,
    pub inserted_structures: Vec<InsertedItem>,
    pub annotations: Vec<AnnotationState>,
    pub dirty: BTreeSet<DerivedStage>,
    /// Review stages changed since the last recompute.
    pub edited: BTreeSet<ReviewStage>,
    pub waived: BTreeSet<ReviewStage>,
    pub export_version: u64,
    pub events: Vec<ReviewEvent>,
    #[serde(skip)]
    abbreviations: AbbreviationTable,
}

fn rank(triplets: &[BioactivityTriplet], query: &str) -> Vec<AnnotationCandidate> {
    rank_for_annotation(triplets, query, &FingerprintParams::default()).unwrap_or_default()
}

fn invalid(msg: impl Into<String>) -> CurationError {
    CurationError::InvalidPayload(msg.into())
}

impl RunState {
    /// State before any review: one pending task per reviewable item.
    pub fn initial(meta: &RunMeta, record: ExtractionRecord) -> RunState {
        let mut targets: Vec<TaskTarget> = Vec::new();
        targets.extend(record.detections.iter().map(|d| TaskTarget::Detection(d.id)));
        targets.extend(record.detections.iter().map(|d| TaskTarget::Ocsr(d.id)));
        targets.extend(record.coreference_map.iter().map(|c| TaskTarget::Coreference(c.detection)));
        targets.extend(record.markush_jobs.iter().map(|j| TaskTarget::Markush(j.scaffold)));
        targets.extend((0..record.measurements.len()).map(TaskTarget::Measurement));
        targets.extend((0..meta.annotation_queries.len()).map(TaskTarget::Annotation));
        let tasks = targets.into_iter().map(|t| new_task(&meta.run_id, t, meta.created_at_ms, false)).collect();
        let annotations = meta
            .annotation_queries
            .iter()
            .map(|q| AnnotationState { query_smiles: q.clone(), candidates: rank(&record.triplets, q), pick: None, pick_rank: None })
            .collect();
        RunState {
            schema_version: SCHEMA_VERSION,
            run_id: meta.run_id.clone(),
            doc_id: meta.doc_id.clone(),
            source_digest: meta.source_digest.clone(),
            created_at_ms: meta.created_at_ms,
            measurements: record
                .measurements
                .iter()
                .map(|m| MeasurementItem { measurement: m.clone(), rejected: false, inserted: false })
                .collect(),
            record,
            tasks,
            inserted_structures: Vec::new(),
            annotations,
            dirty: BTreeSet::new(),
            edited: BTreeSet::new(),
            waived: BTreeSet::new(),
            export_version: 0,
            events: Vec::new(),
            abbreviations: meta.abbreviations.clone(),
        }
    }

    /// Folds a whole log.
    pub fn replay(meta: &RunMeta, record: ExtractionRecord, events: &[ReviewEvent]) -> Result<RunState, CurationError> {
        let mut state = RunState::initial(meta, record);
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn task(&self, id: &str) -> Option<&ReviewTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Tasks of one stage (or all), in stage order then reading order.
    pub fn list_tasks(&self, stage: Option<ReviewStage>) -> Vec<&ReviewTask> {
        let mut out: Vec<&ReviewTask> = self.tasks.iter().filter(|t| stage.is_none_or(|s| t.stage == s)).collect();
        out.sort_by(|a, b| {
            a.stage.cmp(&b.stage).then_with(|| {
                let (ka, kb) = (self.reading_key(a.target), self.reading_key(b.target));
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2)).then(ka.3.cmp(&kb.3))
            })
        });
        out
    }

    fn reading_key(&self, t: TaskTarget) -> (u32, f64, f64, (usize, usize)) {
        match t {
            TaskTarget::Detection(id) | TaskTarget::Ocsr(id) | TaskTarget::Coreference(id) | TaskTarget::Markush(id) => {
                match self.record.detection(id) {
                    Some(d) => (d.page, d.bbox.y0, d.bbox.x0, (0, id)),
                    None => (u32::MAX, 0.0, 0.0, (0, id)),
                }
            }
            TaskTarget::InsertedStructure(i) => (u32::MAX, 0.0, 0.0, (1, i)),
            TaskTarget::Measurement(i) => {
                let first = self.measurements.get(i).and_then(|m| m.measurement.provenance.first());
                match first {
                    Some(p) => (p.page, self.region_ordinal(&p.region) as f64, 0.0, (0, i)),
                    None => (u32::MAX, 0.0, 0.0, (0, i)),
                }
            }
            TaskTarget::Annotation(i) => (0, 0.0, 0.0, (0, i)),
        }
    }

    fn region_ordinal(&self, id: &str) -> usize {
        let parsed = &self.record.parsed;
        parsed
            .text_segments
            .iter()
            .position(|s| s.id == id)
            .or_else(|| parsed.regions.iter().position(|r| r.id == id).map(|i| parsed.text_segments.len() + i))
            .unwrap_or(usize::MAX)
    }

    pub fn counts(&self) -> BTreeMap<ReviewStage, TaskCounts> {
        let mut out: BTreeMap<ReviewStage, TaskCounts> = ReviewStage::ALL.iter().map(|s| (*s, TaskCounts::default())).collect();
        for t in &self.tasks {
            out.entry(t.stage).or_default().add(t.status);
        }
        out
    }

    /// Stages with pending tasks that are not waived.
    pub fn open_stages(&self) -> Vec<ReviewStage> {
        let pending: BTreeSet<ReviewStage> =
            self.tasks.iter().filter(|t| t.status == TaskStatus::Pending).map(|t| t.stage).collect();
        pending.into_iter().filter(|s| !self.waived.contains(s)).collect()
    }

    /// Applies one event. On error the state may be partly modified; callers
    /// that need atomicity apply to a clone.
    pub fn apply(&mut self, event: &ReviewEvent) -> Result<(), CurationError> {
        if event.seq != self.last_seq() + 1 {
            return Err(CurationError::Sequence { expected: self.last_seq() + 1, got: event.seq });
        }
        match &event.action {
            Action::Decision { task, decision } => self.decide(task, decision, event)?,
            Action::Insert { stage, payload } => self.insert(*stage, payload, event)?,
            Action::Waive { stage } => {
                self.waived.insert(*stage);
            }
            Action::Recompute => self.recompute()?,
        }
        self.events.push(event.clone());
        Ok(())
    }

    fn task_index(&self, id: &str) -> Result<usize, CurationError> {
        self.tasks.iter().position(|t| t.id == id).ok_or_else(|| CurationError::UnknownTask(id.to_string()))
    }

    fn mark_dirty(&mut self, stage: ReviewStage) {
        self.edited.insert(stage);
        let derived: &[DerivedStage] = match stage {
            ReviewStage::Detection | ReviewStage::Ocsr | ReviewStage::Coreference | ReviewStage::Markush => {
                &[DerivedStage::Markush, DerivedStage::Integration]
            }
            ReviewStage::Measurement => &[DerivedStage::Integration],
            ReviewStage::Annotation => &[],
        };
        self.dirty.extend(derived.iter().copied());
        if !derived.is_empty() && !self.annotations.is_empty() {
            self.dirty.insert(DerivedStage::Annotation);
        }
    }

    fn decide(&mut self, task_id: &str, decision: &Decision, event: &ReviewEvent) -> Result<(), CurationError> {
        let i = self.task_index(task_id)?;
        let task = self.tasks[i].clone();
        if task.status.is_terminal() {
            return Err(CurationError::TerminalTask { task: task.id, status: task.status });
        }
        let status = match decision {
            Decision::Accept => {
                if let TaskTarget::Annotation(q) = task.target {
                    self.pick(q, if self.annotations[q].candidates.is_empty() { None } else { Some(1) })?;
                }
                TaskStatus::Accepted
            }
            Decision::Reject => {
                self.reject(task.target);
                TaskStatus::Rejected
            }
            Decision::Edit { payload } => {
                let edit = Edit::parse(task.stage, payload).map_err(CurationError::InvalidPayload)?;
                self.edit(task.target, edit)?;
                TaskStatus::Edited
            }
        };
        let t = &mut self.tasks[i];
        t.status = status;
        t.editor = Some(event.editor.clone());
        t.decided_at_ms = Some(event.at_ms);
        Ok(())
    }

    fn detection_mut(&mut self, id: usize) -> &mut bioextract_core::record::Detection {
        self.record.detections.iter_mut().find(|d| d.id == id).expect("tasks refer to existing detections")
    }

    fn reject(&mut self, target: TaskTarget) {
        match target {
            TaskTarget::Detection(id) => add_flag(&mut self.detection_mut(id).flags, FLAG_REJECTED),
            TaskTarget::Ocsr(id) => add_flag(&mut self.detection_mut(id).flags, FLAG_OCSR_REJECTED),
            TaskTarget::Coreference(id) => self.record.coreference_map.retain(|c| c.detection != id),
            TaskTarget::InsertedStructure(k) => self.inserted_structures[k].rejected = true,
            TaskTarget::Markush(id) => self.record.markush_jobs.retain(|j| j.scaffold != id),
            TaskTarget::Measurement(k) => self.measurements[k].rejected = true,
            TaskTarget::Annotation(q) => {
                self.annotations[q].pick = None;
                self.annotations[q].pick_rank = None;
            }
        }
        self.mark_dirty(target.stage());
    }

    fn edit(&mut self, target: TaskTarget, edit: Edit) -> Result<(), CurationError> {
        match (target, edit) {
            (TaskTarget::Detection(id), Edit::Box(bbox)) => {
                if !bbox.is_normalized() {
                    return Err(invalid("box must lie within the page with x0 < x1 and y0 < y1"));
                }
                self.detection_mut(id).bbox = bbox;
                for page in self.record.augmented_pages.iter_mut() {
                    for o in page.overlays.iter_mut().filter(|o| o.detection == id) {
                        o.bbox = bbox;
                    }
                }
            }
            (TaskTarget::Ocsr(id), Edit::Smiles(smiles)) => {
                let g = parse_smiles(&smiles).map_err(|e| invalid(format!("SMILES {smiles:?}: {e}")))?;
                let d = self.detection_mut(id);
                d.flags.retain(|f| f != FLAG_OCSR_INVALID && f != FLAG_OCSR_FAILED && f != FLAG_OCSR_REJECTED);
                d.is_markush = !g.attachment_points.is_empty();
                d.raw_smiles = Some(smiles);
            }
            (TaskTarget::Coreference(id), Edit::Coreference(name)) => {
                let name = non_empty(name)?;
                let entry = self.record.coreference_map.iter_mut().find(|c| c.detection == id).expect("pending entry exists");
                entry.coreference = name;
            }
            (TaskTarget::InsertedStructure(k), Edit::Coreference(name)) => {
                self.inserted_structures[k].structure.coreference = non_empty(name)?;
            }
            (TaskTarget::Markush(id), Edit::Cells(cells)) => {
                let job = self.record.markush_jobs.iter().position(|j| j.scaffold == id).expect("pending job exists");
                let mut table = self.record.markush_jobs[job].table.clone();
                apply_cells(&mut table, &cells, &self.abbreviations, &self.record)?;
                self.record.markush_jobs[job].table = table;
            }
            (TaskTarget::Measurement(k), Edit::Measurement(m)) => {
                m.check().map_err(|e| invalid(e.to_string()))?;
                self.measurements[k].measurement = *m;
            }
            (TaskTarget::Annotation(q), Edit::Pick(rank)) => {
                self.pick(q, rank)?;
                return Ok(());
            }
            (t, _) => return Err(invalid(format!("edit does not fit a {} task", t.stage()))),
        }
        self.mark_dirty(target.stage());
        Ok(())
    }

    fn pick(&mut self, q: usize, rank: Option<usize>) -> Result<(), CurationError> {
        let a = &mut self.annotations[q];
        a.pick = match rank {
            None => None,
            Some(r) => Some(
                a.candidates
                    .get(r.wrapping_sub(1))
                    .map(|c| c.triplet.clone())
                    .ok_or_else(|| invalid(format!("rank {r} is outside 1..={}", a.candidates.len())))?,
            ),
        };
        a.pick_rank = rank;
        Ok(())
    }

    fn insert(&mut self, stage: ReviewStage, payload: &serde_json::Value, event: &ReviewEvent) -> Result<(), CurationError> {
        let target = match Insert::parse(stage, payload).map_err(CurationError::InvalidPayload)? {
            Insert::Structure(s) => {
                let coreference = non_empty(s.coreference)?;
                parse_smiles(&s.smiles).map_err(|e| invalid(format!("SMILES {:?}: {e}", s.smiles)))?;
                self.inserted_structures.push(InsertedItem { structure: InsertedStructure { coreference, smiles: s.smiles }, rejected: false });
                TaskTarget::InsertedStructure(self.inserted_structures.len() - 1)
            }
            Insert::Measurement(m) => {
                m.check().map_err(|e| invalid(e.to_string()))?;
                self.measurements.push(MeasurementItem { measurement: *m, rejected: false, inserted: true });
                TaskTarget::Measurement(self.measurements.len() - 1)
            }
        };
        let mut task = new_task(&self.run_id, target, event.at_ms, true);
        task.status = TaskStatus::Accepted;
        task.editor = Some(event.editor.clone());
        task.decided_at_ms = Some(event.at_ms);
        self.tasks.push(task);
        self.mark_dirty(stage);
        Ok(())
    }

    /// Re-runs dirty deterministic stages without backend calls. With
    /// nothing dirty this changes nothing.
    pub fn recompute(&mut self) -> Result<(), CurationError> {
        if self.dirty.is_empty() {
            return Ok(());
        }
        if let Some(latest) = self.edited.iter().max().copied() {
            let blocking: BTreeSet<ReviewStage> = self
                .tasks
                .iter()
                .filter(|t| t.status == TaskStatus::Pending && t.stage <= latest && !self.waived.contains(&t.stage))
                .map(|t| t.stage)
                .collect();
            if !blocking.is_empty() {
                return Err(CurationError::PendingUpstream(blocking.into_iter().collect()));
            }
        }
        if self.dirty.contains(&DerivedStage::Markush) {
            self.assemble_structures();
        }
        if self.dirty.contains(&DerivedStage::Integration) {
            self.record.measurements =
                self.measurements.iter().filter(|m| !m.rejected).map(|m| m.measurement.clone()).collect();
            let normalized: Vec<_> = self.record.measurements.iter().map(normalize_lenient).collect();
            let joined = join(&normalized, &self.record.structures);
            self.record.triplets = joined.triplets;
            self.record.unmatched_measurements = joined.unmatched_measurements;
            self.record.unmatched_structures = joined.unmatched_structures;
        }
        if self.dirty.contains(&DerivedStage::Annotation) {
            for a in self.annotations.iter_mut() {
                a.candidates = rank(&self.record.triplets, &a.query_smiles);
            }
        }
        self.dirty.clear();
        self.edited.clear();
        self.export_version += 1;
        Ok(())
    }

    fn assemble_structures(&mut self) {
        let rec = &self.record;
        let mut all = explicit_structures(&rec.detections, &rec.coreference_map);
        let mut failures = Vec::new();
        for job in &rec.markush_jobs {
            let Some(d) = rec.detection(job.scaffold).filter(|d| d.flags.is_empty()) else { continue };
            let Some(smiles) = &d.raw_smiles else { continue };
            let out = enumerate_smiles_rows(smiles, job.scaffold, &job.table, &self.abbreviations, Some(&rec.name_resolutions), &rec.detections);
            all.extend(out.records);
            failures.extend(out.failures.into_iter().map(|f| (job.scaffold, f)));
        }
        for item in self.inserted_structures.iter().filter(|i| !i.rejected) {
            if let Ok(g) = parse_smiles(&item.structure.smiles) {
                all.push(StructureRecord {
                    coreference: item.structure.coreference.clone(),
                    smiles: to_canonical_smiles(&g),
                    origin: StructureOrigin::Curated,
                    provenance: vec![],
                });
            }
        }
        self.record.structures = dedup_structures(all);
        self.record.markush_failures = failures;
    }

    /// Enumerates a scaffold's table (the stored one, or `table`) with
    /// `cells` applied, exactly as recompute would.
    pub fn preview_markush(
        &self,
        scaffold: usize,
        table: Option<RGroupTable>,
        cells: &[CellEdit],
    ) -> Result<Vec<PreviewRow>, CurationError> {
        let rec = &self.record;
        let d = rec.detection(scaffold).ok_or_else(|| invalid(format!("no detection {scaffold}")))?;
        let smiles = d.raw_smiles.as_deref().ok_or_else(|| invalid(format!("detection {scaffold} has no recognized structure")))?;
        let mut table = match table {
            Some(t) => t,
            None => rec
                .markush_jobs
                .iter()
                .find(|j| j.scaffold == scaffold)
                .map(|j| j.table.clone())
                .ok_or_else(|| invalid(format!("detection {scaffold} has no R-group table")))?,
        };
        apply_cells(&mut table, cells, &self.abbreviations, rec)?;
        let out = enumerate_smiles_rows(smiles, scaffold, &table, &self.abbreviations, Some(&rec.name_resolutions), &rec.detections);
        let mut rows: Vec<PreviewRow> = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| PreviewRow { row: i, coreference: r.coreference.clone(), smiles: None, failure: None })
            .collect();
        for s in out.records {
            if let StructureOrigin::MarkushRow { row, .. } = s.origin {
                rows[row].smiles = Some(s.smiles);
            }
        }
        for f in out.failures {
            if let Some(r) = rows.get_mut(f.row) {
                r.failure = Some(f);
            } else {
                // A scaffold-level failure applies to every row.
                for r in rows.iter_mut() {
                    r.failure.get_or_insert_with(|| f.clone());
                }
            }
        }
        Ok(rows)
    }

    /// The export bundle. Every stage must be reviewed or waived and
    /// nothing may await recompute.
    pub fn export(&self) -> Result<ExportBundle, CurationError> {
        let open = self.open_stages();
        if !open.is_empty() {
            return Err(CurationError::NotExportable(open));
        }
        if !self.dirty.is_empty() {
            return Err(CurationError::Dirty(self.dirty.iter().copied().collect()));
        }
        Ok(ExportBundle {
            schema_version: SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            doc_id: self.doc_id.clone(),
            source_digest: self.source_digest.clone(),
            export_version: self.export_version,
            partial: !self.waived.is_empty(),
            waived: self.waived.iter().copied().collect(),
            triplets: self.record.triplets.clone(),
            annotations: self
                .annotations
                .iter()
                .map(|a| AnnotationPick { query_smiles: a.query_smiles.clone(), rank: a.pick_rank, pick: a.pick.clone() })
                .collect(),
            task_counts: self.counts(),
            timing: timing_summary(self.created_at_ms, &self.events, &self.tasks),
            events: self.events.clone(),
        })
    }
}

fn new_task(run_id: &str, target: TaskTarget, at_ms: u64, inserted: bool) -> ReviewTask {
    ReviewTask {
        id: target.task_id(run_id),
        run_id: run_id.to_string(),
        stage: target.stage(),
        target,
        status: TaskStatus::Pending,
        editor: None,
        created_at_ms: at_ms,
        decided_at_ms: None,
        inserted,
    }
}

fn add_flag(flags: &mut Vec<String>, flag: &str) {
    if !flags.iter().any(|f| f == flag) {
        flags.push(flag.to_string());
    }
}

fn non_empty(name: String) -> Result<String, CurationError> {
    let name = name.trim().to_string();
    if name.is_empty() {
        Err(invalid("coreference must not be empty"))
    } else {
        Ok(name)
    }
}

/// Cells must name an existing row and a substituent that resolves now
/// (recorded name resolutions only; no backend is consulted).
fn apply_cells(
    table: &mut RGroupTable,
    cells: &[CellEdit],
    abbrevs: &AbbreviationTable,
    rec: &ExtractionRecord,
) -> Result<(), CurationError> {
    for c in cells {
        let n = table.rows.len();
        let row = table.rows.get_mut(c.row).ok_or_else(|| invalid(format!("row {} is outside 0..{n}", c.row)))?;
        let label = c.label.trim();
        if label.is_empty() {
            return Err(invalid("R-group label must not be empty"));
        }
        resolve_substituent(&c.substituent, abbrevs, Some(&rec.name_resolutions), &rec.detections)
            .map_err(|e| invalid(format!("row {} {label}: {e}", c.row)))?;
        row.assignment.insert(label.to_string(), c.substituent.clone());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewRow {
    pub row: usize,
    pub coreference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smiles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<bioextract_core::markush::RowFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPick {
    pub query_smiles: String,
    pub rank: Option<usize>,
    pub pick: Option<BioactivityTriplet>,
}

/// Reviewer time per stage. Each event is charged the time since the
/// previous event (or since run creation for the first).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub events: usize,
    pub total_ms: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
}

pub fn timing_summary(created_at_ms: u64, events: &[ReviewEvent], tasks: &[ReviewTask]) -> BTreeMap<ReviewStage, StageTiming> {
    let stage_of: BTreeMap<&str, ReviewStage> = tasks.iter().map(|t| (t.id.as_str(), t.stage)).collect();
    let mut spans: BTreeMap<ReviewStage, Vec<u64>> = BTreeMap::new();
    let mut prev = created_at_ms;
    for e in events {
        let span = e.at_ms.saturating_sub(prev);
        prev = prev.max(e.at_ms);
        let stage = match &e.action {
            Action::Decision { task, .. } => stage_of.get(task.as_str()).copied(),
            Action::Insert { stage, .. } | Action::Waive { stage } => Some(*stage),
            Action::Recompute => None,
        };
        if let Some(s) = stage {
            spans.entry(s).or_default().push(span);
        }
    }
    spans
        .into_iter()
        .map(|(stage, mut v)| {
            v.sort_unstable();
            let total: u64 = v.iter().sum();
            let n = v.len();
            let median = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 };
            (stage, StageTiming { events: n, total_ms: total, mean_ms: total as f64 / n as f64, median_ms: median })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub schema_version: u32,
    pub run_id: String,
    pub doc_id: String,
    pub source_digest: String,
    pub export_version: u64,
    /// Some stage was waived rather than fully reviewed.
    pub partial: bool,
    pub waived: Vec<ReviewStage>,
    pub triplets: Vec<BioactivityTriplet>,
    pub annotations: Vec<AnnotationPick>,
    pub task_counts: BTreeMap<ReviewStage, TaskCounts>,
    pub timing: BTreeMap<ReviewStage, StageTiming>,
    pub events: Vec<ReviewEvent>,
}

impl ExportBundle {
    /// Canonical bytes of the bundle.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("bundle serializes");
        v.push(b'\n');
        v
    }

    pub fn triplets_jsonl(&self) -> String {
        bioextract_core::record::triplets_jsonl(&self.triplets)
    }
}
