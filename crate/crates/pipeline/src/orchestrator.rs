//! Runs documents through parsing, the structure and measurement branches
//! and the join, persisting the record after every stage.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use bioextract_core::chem::{parse_smiles, to_canonical_smiles};
use bioextract_core::join::{join, normalize_coreference, ProteinDb, ProteinEnricher, ProteinRecord, StructureOrigin, StructureRecord};
use bioextract_core::markush::{enumerate_smiles_rows, AbbreviationTable, NameToStructure, Substituent};
use bioextract_core::measure::{merge_modalities, normalize_lenient, parse_measurement_text, AssayType, Measurement, Modality, Provenance};
use bioextract_core::record::{
    build_augmented_pages, AugmentedPage, CoreferenceEntry, Detection, ExtractionRecord, MarkushJob, ParsedDocument,
    RegionKind, SegmentKind, Stage, StageStatus, FLAG_OCSR_FAILED, FLAG_OCSR_INVALID,
};

use crate::backend::{Backends, BackendError, DETECTOR, NAME_TO_STRUCTURE, OCSR, PARSER, PROTEIN_DB, REASONER};
use crate::config::PipelineConfig;
use crate::schema::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocumentInput {
    /// A source file handed to the parser backend.
    Source(PathBuf),
    /// A `ParsedDocument` JSON file; no parser call is made.
    Parsed(PathBuf),
}

impl DocumentInput {
    /// `.json` files are pre-parsed documents; anything else is a source.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            DocumentInput::Parsed(path)
        } else {
            DocumentInput::Source(path)
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            DocumentInput::Source(p) | DocumentInput::Parsed(p) => p,
        }
    }

    /// A file, or every `.pdf` and `.json` file directly inside a directory,
    /// sorted by name.
    pub fn collect(path: &Path) -> Result<Vec<DocumentInput>, PipelineError> {
        if !path.is_dir() {
            return Ok(vec![DocumentInput::from_path(path)]);
        }
        let io = |e| PipelineError::Input { path: path.to_path_buf(), source: e };
        let mut files = Vec::new();
        for entry in std::fs::read_dir(path).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if matches!(p.extension().and_then(|e| e.to_str()), Some("pdf" | "json")) {
                files.push(p);
            }
        }
        files.sort();
        Ok(files.into_iter().map(DocumentInput::from_path).collect())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("{path}: not a parsed document: {source}")]
    InputJson { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Persist { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Abbreviations(#[from] bioextract_core::markush::MarkushError),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub coreference_batch: usize,
    pub enrich_proteins: bool,
    pub abbreviations: AbbreviationTable,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions { out_dir: out_dir.into(), coreference_batch: 4, enrich_proteins: false, abbreviations: AbbreviationTable::builtin() }
    }

    pub fn from_config(cfg: &PipelineConfig, out_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut opts = RunOptions::new(out_dir);
        opts.coreference_batch = cfg.coreference_batch.max(1);
        opts.enrich_proteins = cfg.enrich_proteins;
        if let Some(path) = &cfg.abbreviations {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Input { path: path.clone(), source: e })?;
            for (k, v) in AbbreviationTable::from_tsv(&text)?.iter() {
                opts.abbreviations.insert(k, v)?;
            }
        }
        Ok(opts)
    }
}

/// Wall-clock stage durations, kept out of the record so the record stays
/// reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub doc_id: String,
    pub stages_ms: BTreeMap<Stage, f64>,
}

pub const RECORD_FILE: &str = "record.json";
pub const TRIPLETS_FILE: &str = "triplets.jsonl";
pub const TIMING_FILE: &str = "timing.json";

fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(tmp, path)
}

/// Record serialization used for every persisted copy.
pub fn record_json(record: &ExtractionRecord) -> String {
    let mut s = serde_json::to_string_pretty(record).expect("record serializes");
    s.push('\n');
    s
}

/// Single writer for one document's record; every change is persisted.
struct Recorder {
    dir: PathBuf,
    record: Mutex<ExtractionRecord>,
    started: Mutex<BTreeMap<Stage, Instant>>,
    timing: Mutex<Timing>,
    persist_error: Mutex<Option<std::io::Error>>,
}

impl Recorder {
    fn update<R>(&self, f: impl FnOnce(&mut ExtractionRecord) -> R) -> R {
        let mut rec = self.record.lock().unwrap_or_else(|e| e.into_inner());
        let out = f(&mut rec);
        if let Err(e) = write_atomic(&self.dir.join(RECORD_FILE), record_json(&rec).as_bytes()) {
            log::error!("could not persist {}: {e}", rec.doc_id);
            self.persist_error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
        }
        out
    }

    fn read<R>(&self, f: impl FnOnce(&ExtractionRecord) -> R) -> R {
        f(&self.record.lock().unwrap_or_else(|e| e.into_inner()))
    }

    fn warn(&self, counter: &str) {
        self.update(|r| r.warn(counter));
    }

    fn begin(&self, stage: Stage) {
        self.started.lock().unwrap().insert(stage, Instant::now());
        self.update(|r| r.set_status(stage, StageStatus::Running, None));
    }

    fn finish(&self, stage: Stage, result: Result<(), String>) -> bool {
        if let Some(t) = self.started.lock().unwrap().remove(&stage) {
            self.timing.lock().unwrap().stages_ms.insert(stage, t.elapsed().as_secs_f64() * 1000.0);
        }
        let ok = result.is_ok();
        match result {
            Ok(()) => self.update(|r| r.set_status(stage, StageStatus::Done, None)),
            Err(e) => {
                log::warn!("stage {} failed: {e}", stage.name());
                self.update(|r| r.set_status(stage, StageStatus::Failed, Some(e)))
            }
        };
        ok
    }

    fn skip(&self, stages: &[Stage]) {
        self.update(|r| {
            for s in stages {
                r.set_status(*s, StageStatus::Skipped, None);
            }
        });
    }

    fn uses(&self, backends: &Backends, name: &str) {
        if let Some(v) = backends.version(name) {
            let v = v.to_string();
            self.update(|r| {
                r.backends.insert(name.to_string(), v);
            });
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs one document. Stage failures are recorded, not returned; errors
/// are limited to reading the input and writing outputs.
pub fn run_document(input: &DocumentInput, backends: &Backends, opts: &RunOptions) -> Result<ExtractionRecord, PipelineError> {
    let path = input.path();
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Input { path: path.into(), source: e })?;
    let digest = sha256_hex(&bytes);
    let preparsed: Option<ParsedDocument> = match input {
        DocumentInput::Parsed(_) => {
            Some(serde_json::from_slice(&bytes).map_err(|e| PipelineError::InputJson { path: path.into(), source: e })?)
        }
        DocumentInput::Source(_) => None,
    };
    let doc_id = match &preparsed {
        Some(p) if !p.doc_id.is_empty() => p.doc_id.clone(),
        _ => path.file_stem().and_then(|s| s.to_str()).unwrap_or("document").to_string(),
    };
    let dir = opts.out_dir.join(&doc_id);
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::Persist { path: dir.clone(), source: e })?;
    let rec = Recorder {
        dir: dir.clone(),
        record: Mutex::new(ExtractionRecord::new(&doc_id, &digest)),
        started: Mutex::new(BTreeMap::new()),
        timing: Mutex::new(Timing { doc_id: doc_id.clone(), ..Timing::default() }),
        persist_error: Mutex::new(None),
    };

    rec.begin(Stage::Parse);
    let parsed = match preparsed {
        Some(p) => Ok(p),
        None => {
            rec.uses(backends, PARSER);
            let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            backends.call_as::<_, ParsedDocument>(PARSER, &ParseRequest { source_name: name, source_digest: digest.clone() })
                .map_err(|e| e.to_string())
        }
    }
    .and_then(|mut p| {
        p.doc_id = doc_id.clone();
        p.check().map(|_| p)
    });
    match parsed {
        Ok(parsed) => {
            rec.update(|r| r.parsed = parsed.clone());
            rec.finish(Stage::Parse, Ok(()));
            std::thread::scope(|s| {
                let structures = s.spawn(|| structure_branch(&parsed, backends, opts, &rec));
                measurement_branch(&parsed, backends, &rec);
                structures.join().expect("structure branch panicked");
            });
            integrate(backends, opts, &rec);
        }
        Err(e) => {
            rec.finish(Stage::Parse, Err(e));
            rec.skip(&Stage::ALL[1..]);
        }
    }

    let record = rec.read(Clone::clone);
    let persist = |name: &str, data: &[u8]| {
        let p = dir.join(name);
        write_atomic(&p, data).map_err(|e| PipelineError::Persist { path: p, source: e })
    };
    persist(TRIPLETS_FILE, record.triplets_jsonl().as_bytes())?;
    let timing = rec.timing.lock().unwrap().clone();
    persist(TIMING_FILE, serde_json::to_string_pretty(&timing).expect("timing serializes").as_bytes())?;
    if let Some(e) = rec.persist_error.lock().unwrap().take() {
        return Err(PipelineError::Persist { path: dir.join(RECORD_FILE), source: e });
    }
    Ok(record)
}

/// Runs documents on up to `workers` threads. Results keep input order.
pub fn run_batch(
    inputs: &[DocumentInput],
    backends: &Backends,
    opts: &RunOptions,
    workers: usize,
) -> Vec<Result<ExtractionRecord, PipelineError>> {
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<ExtractionRecord, PipelineError>>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, inputs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= inputs.len() {
                    break;
                }
                let out = run_document(&inputs[i], backends, opts);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().unwrap().expect("every input ran")).collect()
}

fn structure_branch(parsed: &ParsedDocument, backends: &Backends, opts: &RunOptions, rec: &Recorder) {
    rec.begin(Stage::Detect);
    rec.uses(backends, DETECTOR);
    let detections = match detect(parsed, backends, rec) {
        Ok(d) => d,
        Err(e) => {
            rec.finish(Stage::Detect, Err(e.to_string()));
            rec.skip(&[Stage::Ocsr, Stage::Coreference, Stage::Markush]);
            return;
        }
    };
    let pages = build_augmented_pages(parsed, &detections);
    rec.update(|r| {
        r.detections = detections.clone();
        r.augmented_pages = pages.clone();
    });
    rec.finish(Stage::Detect, Ok(()));

    rec.begin(Stage::Ocsr);
    rec.uses(backends, OCSR);
    let detections = recognize(parsed, detections, backends);
    rec.update(|r| r.detections = detections.clone());
    rec.finish(Stage::Ocsr, Ok(()));

    // Coreference and Markush enumeration both start from recognized
    // depictions; explicit structures come first in the structure list.
    rec.begin(Stage::Coreference);
    rec.uses(backends, REASONER);
    let coref = coreference(parsed, &pages, backends, opts.coreference_batch, rec);
    let explicit = explicit_structures(&detections, &coref.0);
    rec.update(|r| {
        r.coreference_map = coref.0.clone();
        r.structures = dedup_structures(explicit.clone());
    });
    rec.finish(Stage::Coreference, coref.1);

    rec.begin(Stage::Markush);
    let result = markush(parsed, &detections, &pages, backends, opts, rec);
    rec.finish(Stage::Markush, result);
}

fn detect(parsed: &ParsedDocument, backends: &Backends, rec: &Recorder) -> Result<Vec<Detection>, BackendError> {
    let mut images: Vec<_> = parsed.page_images.iter().collect();
    images.sort_by_key(|p| p.page);
    let mut found = Vec::new();
    for img in images {
        let resp: DetectResponse = backends.call_as(DETECTOR, &DetectRequest { page: img.page, image: img.image.clone() })?;
        for d in resp.detections {
            if d.bbox.is_normalized() {
                found.push((img.page, d));
            } else {
                rec.warn("detect.invalid_box");
            }
        }
    }
    found.sort_by(|a, b| {
        (a.0, a.1.bbox.y0, a.1.bbox.x0).partial_cmp(&(b.0, b.1.bbox.y0, b.1.bbox.x0)).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(id, (page, d))| Detection {
            id,
            page,
            bbox: d.bbox,
            score: d.score,
            raw_smiles: None,
            is_markush: d.is_markush,
            flags: vec![],
        })
        .collect())
}

/// Reads every detection. A depiction with attachment points is a Markush
/// scaffold whatever the detector said.
fn recognize(parsed: &ParsedDocument, mut detections: Vec<Detection>, backends: &Backends) -> Vec<Detection> {
    for d in detections.iter_mut() {
        let image = parsed.page_image(d.page).map(|p| p.image.clone()).unwrap_or_default();
        match backends.call_as::<_, OcsrResponse>(OCSR, &OcsrRequest { page: d.page, image, bbox: d.bbox }) {
            Ok(OcsrResponse { smiles: Some(s) }) => {
                match parse_smiles(&s) {
                    Ok(g) => d.is_markush |= !g.attachment_points.is_empty(),
                    Err(_) => d.flags.push(FLAG_OCSR_INVALID.into()),
                }
                d.raw_smiles = Some(s);
            }
            Ok(OcsrResponse { smiles: None }) => d.flags.push(FLAG_OCSR_FAILED.into()),
            Err(e) => {
                log::warn!("OCSR of detection {} failed: {e}", d.id);
                d.flags.push(FLAG_OCSR_FAILED.into());
            }
        }
    }
    detections
}

fn page_context(parsed: &ParsedDocument, page: u32) -> Vec<String> {
    parsed.text_segments.iter().filter(|s| s.page == page).map(|s| s.text.clone()).collect()
}

fn caption_text(parsed: &ParsedDocument, caption: &Option<String>) -> Option<String> {
    let id = caption.as_deref()?;
    parsed.text_segments.iter().find(|s| s.id == id).map(|s| s.text.clone())
}

fn labeled(page: &AugmentedPage) -> Vec<LabeledBox> {
    page.overlays.iter().map(|o| LabeledBox { label: o.label, bbox: o.bbox }).collect()
}

/// Asks for names of the numbered depictions, at most `batch` per request.
fn coreference(
    parsed: &ParsedDocument,
    pages: &[AugmentedPage],
    backends: &Backends,
    batch: usize,
    rec: &Recorder,
) -> (Vec<CoreferenceEntry>, Result<(), String>) {
    let mut entries = Vec::new();
    let mut first_error = None;
    for page in pages {
        let context = page_context(parsed, page.page);
        for chunk in page.overlays.chunks(batch) {
            let overlays: Vec<LabeledBox> = chunk.iter().map(|o| LabeledBox { label: o.label, bbox: o.bbox }).collect();
            let request = ReasonerRequest::Coreference { page: page.page, image: page.image.clone(), overlays, context: context.clone() };
            match backends.call_as::<_, CoreferenceResponse>(REASONER, &request) {
                Ok(resp) => {
                    for item in resp.entries {
                        match chunk.iter().find(|o| o.label == item.label) {
                            Some(o) if !item.coreference.trim().is_empty() => {
                                entries.push(CoreferenceEntry { detection: o.detection, coreference: item.coreference })
                            }
                            _ => rec.warn("coreference.unknown_label"),
                        }
                    }
                }
                Err(e) => {
                    first_error.get_or_insert(e.to_string());
                }
            }
        }
    }
    (entries, first_error.map_or(Ok(()), Err))
}

/// Named, cleanly recognized, non-Markush depictions become structures.
pub fn explicit_structures(detections: &[Detection], coref: &[CoreferenceEntry]) -> Vec<StructureRecord> {
    coref
        .iter()
        .filter_map(|c| {
            let d = detections.iter().find(|d| d.id == c.detection)?;
            if d.is_markush || !d.flags.is_empty() {
                return None;
            }
            let g = parse_smiles(d.raw_smiles.as_deref()?).ok()?;
            Some(StructureRecord {
                coreference: c.coreference.clone(),
                smiles: to_canonical_smiles(&g),
                origin: StructureOrigin::Explicit,
                provenance: vec![d.id],
            })
        })
        .collect()
}

/// Keeps the first of records sharing (normalized key, SMILES), merging
/// their provenance.
pub fn dedup_structures(records: Vec<StructureRecord>) -> Vec<StructureRecord> {
    let mut out: Vec<StructureRecord> = Vec::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in records {
        let key = (normalize_coreference(&r.coreference), r.smiles.clone());
        match seen.get(&key) {
            Some(&i) => {
                for p in r.provenance {
                    if !out[i].provenance.contains(&p) {
                        out[i].provenance.push(p);
                    }
                }
            }
            None => {
                seen.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

/// Name-to-structure calls through the backend, remembering each answer.
struct RecordingNames<'a> {
    backends: &'a Backends,
    answers: Mutex<BTreeMap<String, Result<String, String>>>,
}

impl NameToStructure for RecordingNames<'_> {
    fn name_to_smiles(&self, name: &str) -> Result<String, String> {
        if let Some(a) = self.answers.lock().unwrap().get(name) {
            return a.clone();
        }
        let answer = match self.backends.call_as::<_, NameResponse>(NAME_TO_STRUCTURE, &NameRequest { name: name.into() }) {
            Ok(NameResponse { smiles: Some(s), .. }) => Ok(s),
            Ok(NameResponse { error, .. }) => Err(error.unwrap_or_else(|| "no structure".into())),
            Err(e) => Err(e.to_string()),
        };
        self.answers.lock().unwrap().insert(name.to_string(), answer.clone());
        answer
    }
}

/// Replaces page-local overlay labels in visual-index substituents with
/// detection ids. Unknown labels become ids no detection has.
fn resolve_visual_indices(table: &mut bioextract_core::markush::RGroupTable, page: &AugmentedPage) {
    for row in table.rows.iter_mut() {
        for s in row.assignment.values_mut() {
            if let Substituent::VisualIndex(label) = s {
                *label = page.overlays.iter().find(|o| o.label as usize == *label).map_or(usize::MAX, |o| o.detection);
            }
        }
    }
}

fn markush(
    parsed: &ParsedDocument,
    detections: &[Detection],
    pages: &[AugmentedPage],
    backends: &Backends,
    opts: &RunOptions,
    rec: &Recorder,
) -> Result<(), String> {
    let names = RecordingNames { backends, answers: Mutex::new(BTreeMap::new()) };
    let mut jobs = Vec::new();
    let mut first_error = None;
    for d in detections.iter().filter(|d| d.is_markush && d.flags.is_empty()) {
        let (Some(smiles), Some(page)) = (d.raw_smiles.clone(), pages.iter().find(|p| p.page == d.page)) else { continue };
        let Some(overlay) = page.overlays.iter().find(|o| o.detection == d.id) else { continue };
        let request = ReasonerRequest::Markush {
            page: d.page,
            image: page.image.clone(),
            scaffold: LabeledBox { label: overlay.label, bbox: d.bbox },
            scaffold_smiles: smiles,
            overlays: labeled(page),
            context: page_context(parsed, d.page),
        };
        match backends.call_as::<_, MarkushResponse>(REASONER, &request) {
            Ok(mut resp) => {
                resolve_visual_indices(&mut resp.table, page);
                jobs.push(MarkushJob { scaffold: d.id, table: resp.table });
            }
            Err(e) => {
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for job in &jobs {
        let smiles = detections.iter().find(|d| d.id == job.scaffold).and_then(|d| d.raw_smiles.clone()).unwrap_or_default();
        let out = enumerate_smiles_rows(&smiles, job.scaffold, &job.table, &opts.abbreviations, Some(&names), detections);
        records.extend(out.records);
        failures.extend(out.failures.into_iter().map(|f| (job.scaffold, f)));
    }
    let resolved: BTreeMap<String, String> =
        names.answers.into_inner().unwrap().into_iter().filter_map(|(k, v)| v.ok().map(|s| (k, s))).collect();
    if !resolved.is_empty() {
        rec.uses(backends, NAME_TO_STRUCTURE);
    }
    rec.update(|r| {
        r.markush_jobs = jobs;
        r.markush_failures = failures;
        r.name_resolutions = resolved;
        let mut all = std::mem::take(&mut r.structures);
        all.extend(records);
        r.structures = dedup_structures(all);
    });
    first_error.map_or(Ok(()), Err)
}

fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Text => "text",
        Modality::Table => "table",
        Modality::Figure => "figure",
    }
}

fn measurement_branch(parsed: &ParsedDocument, backends: &Backends, rec: &Recorder) {
    rec.begin(Stage::Measurement);
    rec.uses(backends, REASONER);
    let mut requests: Vec<ReasonerRequest> = Vec::new();
    for s in parsed.text_segments.iter().filter(|s| s.kind == SegmentKind::Paragraph) {
        requests.push(ReasonerRequest::Measurements {
            modality: Modality::Text,
            page: s.page,
            source: s.id.clone(),
            text: Some(s.text.clone()),
            image: None,
            caption: None,
        });
    }
    for r in &parsed.regions {
        let modality = match r.kind {
            RegionKind::Table => Modality::Table,
            RegionKind::Figure => Modality::Figure,
        };
        let table_text: Vec<&str> = parsed
            .text_segments
            .iter()
            .filter(|s| s.kind == SegmentKind::TableText && s.page == r.page && modality == Modality::Table)
            .map(|s| s.text.as_str())
            .collect();
        requests.push(ReasonerRequest::Measurements {
            modality,
            page: r.page,
            source: r.id.clone(),
            text: (!table_text.is_empty()).then(|| table_text.join("\n")),
            image: r.image.clone(),
            caption: caption_text(parsed, &r.caption),
        });
    }
    let mut per_modality: BTreeMap<Modality, Vec<Measurement>> = BTreeMap::new();
    let (mut failed, total) = (0usize, requests.len());
    let mut failed_modalities = BTreeSet::new();
    for req in &requests {
        let ReasonerRequest::Measurements { modality, page, source, .. } = req else { continue };
        match backends.call_as::<_, MeasurementsResponse>(REASONER, req) {
            Ok(resp) => {
                for item in resp.measurements {
                    let hint = item.assay_type.clone().map(AssayType::from);
                    match parse_measurement_text(&item.value_text, hint.as_ref()) {
                        Ok(v) => per_modality.entry(*modality).or_default().extend(v.into_measurements(
                            &item.protein,
                            &item.ligand_coreference,
                            *modality,
                            Provenance { page: *page, region: source.clone() },
                        )),
                        Err(e) => {
                            log::warn!("dropping measurement '{}' from {source}: {e}", item.value_text);
                            rec.warn("measurement.unparseable");
                        }
                    }
                }
            }
            Err(e) => {
                log::warn!("measurement extraction from {source} failed: {e}");
                failed += 1;
                failed_modalities.insert(*modality);
                rec.warn(&format!("measurement.{}.failed", modality_name(*modality)));
            }
        }
    }
    let get = |m: Modality| per_modality.get(&m).cloned().unwrap_or_default();
    let merged = merge_modalities(&get(Modality::Text), &get(Modality::Table), &get(Modality::Figure));
    rec.update(|r| r.measurements = merged);
    let result = if total > 0 && failed == total {
        Err("every measurement request failed".to_string())
    } else {
        Ok(())
    };
    rec.finish(Stage::Measurement, result);
}

struct DbClient<'a>(&'a Backends);

impl ProteinDb for DbClient<'_> {
    fn lookup(&self, name: &str) -> Result<Option<ProteinRecord>, String> {
        self.0
            .call_as::<_, ProteinResponse>(PROTEIN_DB, &ProteinRequest { name: name.into() })
            .map(|r| r.record)
            .map_err(|e| e.to_string())
    }
}

fn integrate(backends: &Backends, opts: &RunOptions, rec: &Recorder) {
    rec.begin(Stage::Integration);
    let (measurements, structures) = rec.read(|r| (r.measurements.clone(), r.structures.clone()));
    let normalized: Vec<_> = measurements.iter().map(normalize_lenient).collect();
    let joined = join(&normalized, &structures);
    let mut proteins = BTreeMap::new();
    if opts.enrich_proteins && backends.has(PROTEIN_DB) {
        rec.uses(backends, PROTEIN_DB);
        let enricher = ProteinEnricher::new(opts.out_dir.join(".protein_cache"));
        let names: BTreeSet<&str> = joined.triplets.iter().map(|t| t.protein.as_str()).collect();
        for name in names {
            if let Some(p) = enricher.enrich(name, Some(&DbClient(backends))) {
                proteins.insert(name.to_string(), p);
            }
        }
        for _ in 0..enricher.warnings() {
            rec.warn("protein_db.failed");
        }
    }
    rec.update(|r| {
        r.triplets = joined.triplets;
        r.unmatched_measurements = joined.unmatched_measurements;
        r.unmatched_structures = joined.unmatched_structures;
        r.proteins = proteins;
    });
    rec.finish(Stage::Integration, Ok(()));
}
