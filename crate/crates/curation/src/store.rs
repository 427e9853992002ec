//! One directory per run: `meta.json`, `initial_record.json` and the
//! append-only `events.jsonl`. Writes to a run are serialized by its lock.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bioextract_core::chem::parse_smiles;
use bioextract_core::markush::AbbreviationTable;
use bioextract_core::record::ExtractionRecord;
use bioextract_pipeline::{run_document, Backends, DocumentInput, RunOptions};

use crate::error::CurationError;
use crate::model::*;
use crate::state::RunState;

pub const META_FILE: &str = "meta.json";
pub const INITIAL_RECORD_FILE: &str = "initial_record.json";
pub const EVENTS_FILE: &str = "events.jsonl";

/// Backends and options used to extract submitted documents.
#[derive(Clone)]
pub struct Pipeline {
    pub backends: Arc<Backends>,
    pub options: RunOptions,
}

/// What a new run starts from.
#[derive(Debug, Clone)]
pub enum RunSource {
    /// A document on the server's filesystem, extracted in the background.
    Document(PathBuf),
    /// An extraction record produced elsewhere.
    Record(Box<ExtractionRecord>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub run_id: String,
    /// A run for the same document digest already existed.
    pub duplicate: bool,
    pub status: RunStatus,
}

struct Slot {
    meta: RunMeta,
    state: Option<RunState>,
}

type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub struct RunStore {
    root: PathBuf,
    pipeline: Option<Pipeline>,
    abbreviations: AbbreviationTable,
    runs: Mutex<BTreeMap<String, Arc<Mutex<Slot>>>>,
    clock: Clock,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CurationError> {
    let mut text = serde_json::to_vec_pretty(value).expect("serializes");
    text.push(b'\n');
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(CurationError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(CurationError::io(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CurationError> {
    let text = std::fs::read(path).map_err(CurationError::io(path))?;
    serde_json::from_slice(&text).map_err(CurationError::json(path))
}

/// Parses `events.jsonl`; a missing file is an empty log.
pub fn read_events(path: &Path) -> Result<Vec<ReviewEvent>, CurationError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CurationError::Io { path: path.into(), source: e }),
    };
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(CurationError::json(path))).collect()
}

/// Rebuilds a run from its directory alone.
pub fn load_run_dir(dir: &Path) -> Result<(RunMeta, Option<RunState>), CurationError> {
    let meta: RunMeta = read_json(&dir.join(META_FILE))?;
    if meta.status != RunStatus::Ready {
        return Ok((meta, None));
    }
    let record: ExtractionRecord = read_json(&dir.join(INITIAL_RECORD_FILE))?;
    let events = read_events(&dir.join(EVENTS_FILE))?;
    let state = RunState::replay(&meta, record, &events)?;
    Ok((meta, Some(state)))
}

fn run_id_for(digest: &str) -> String {
    format!("run-{}", &digest[..digest.len().min(16)])
}

impl RunStore {
    /// Opens (or creates) a store and reloads every run in it. Runs whose
    /// extraction was interrupted are marked failed.
    pub fn open(root: impl Into<PathBuf>, pipeline: Option<Pipeline>) -> Result<RunStore, CurationError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(CurationError::io(&root))?;
        let mut runs = BTreeMap::new();
        for entry in std::fs::read_dir(&root).map_err(CurationError::io(&root))? {
            let dir = entry.map_err(CurationError::io(&root))?.path();
            if !dir.join(META_FILE).is_file() {
                continue;
            }
            let (mut meta, state) = load_run_dir(&dir)?;
            if meta.status == RunStatus::Processing {
                meta.status = RunStatus::Failed;
                meta.error = Some("interrupted before extraction finished".into());
                write_json_atomic(&dir.join(META_FILE), &meta)?;
            }
            runs.insert(meta.run_id.clone(), Arc::new(Mutex::new(Slot { meta, state })));
        }
        let abbreviations = pipeline.as_ref().map_or_else(AbbreviationTable::builtin, |p| p.options.abbreviations.clone());
        Ok(RunStore { root, pipeline, abbreviations, runs: Mutex::new(runs), clock: Arc::new(now_ms) })
    }

    /// Replaces the wall clock (milliseconds since the epoch).
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    fn slot(&self, run_id: &str) -> Result<Arc<Mutex<Slot>>, CurationError> {
        lock(&self.runs).get(run_id).cloned().ok_or_else(|| CurationError::UnknownRun(run_id.to_string()))
    }

    pub fn run_ids(&self) -> Vec<String> {
        lock(&self.runs).keys().cloned().collect()
    }

    pub fn create_run(self: &Arc<Self>, source: RunSource, annotation_queries: Vec<String>) -> Result<Created, CurationError> {
        for q in &annotation_queries {
            parse_smiles(q).map_err(|e| CurationError::InvalidPayload(format!("annotation query {q:?}: {e}")))?;
        }
        let (digest, doc_id, record, document) = match source {
            RunSource::Document(path) => {
                let bytes = std::fs::read(&path).map_err(|_| CurationError::DocumentNotFound(path.clone()))?;
                let digest = hex::encode(Sha256::digest(&bytes));
                let doc_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("document").to_string();
                (digest, doc_id, None, Some(path))
            }
            RunSource::Record(record) => {
                let digest = if record.source_digest.is_empty() {
                    hex::encode(Sha256::digest(serde_json::to_vec(&record).expect("record serializes")))
                } else {
                    record.source_digest.clone()
                };
                (digest, record.doc_id.clone(), Some(*record), None)
            }
        };
        let run_id = run_id_for(&digest);
        let mut runs = lock(&self.runs);
        if let Some(slot) = runs.get(&run_id) {
            return Ok(Created { run_id, duplicate: true, status: lock(slot).meta.status });
        }
        if record.is_none() && self.pipeline.is_none() {
            return Err(CurationError::NoPipeline);
        }
        let dir = self.run_dir(&run_id);
        std::fs::create_dir_all(&dir).map_err(CurationError::io(&dir))?;
        let mut meta = RunMeta {
            schema_version: SCHEMA_VERSION,
            run_id: run_id.clone(),
            doc_id,
            source_digest: digest,
            created_at_ms: (self.clock)(),
            status: RunStatus::Processing,
            error: None,
            annotation_queries,
            abbreviations: self.abbreviations.clone(),
        };
        let state = match record {
            Some(record) => {
                meta.status = RunStatus::Ready;
                write_json_atomic(&dir.join(INITIAL_RECORD_FILE), &record)?;
                Some(RunState::initial(&meta, record))
            }
            None => None,
        };
        write_json_atomic(&dir.join(META_FILE), &meta)?;
        let status = meta.status;
        let slot = Arc::new(Mutex::new(Slot { meta, state }));
        runs.insert(run_id.clone(), slot.clone());
        drop(runs);
        if let Some(path) = document {
            let store = Arc::clone(self);
            std::thread::spawn(move || store.extract(&slot, &path));
        }
        Ok(Created { run_id, duplicate: false, status })
    }

    fn extract(&self, slot: &Mutex<Slot>, path: &Path) {
        let pipeline = self.pipeline.as_ref().expect("checked before spawning");
        let run_id = lock(slot).meta.run_id.clone();
        let dir = self.run_dir(&run_id);
        let mut options = pipeline.options.clone();
        options.out_dir = dir.join("pipeline");
        let result = run_document(&DocumentInput::from_path(path), &pipeline.backends, &options)
            .map_err(|e| e.to_string())
            .and_then(|record| {
                write_json_atomic(&dir.join(INITIAL_RECORD_FILE), &record).map_err(|e| e.to_string())?;
                Ok(record)
            });
        let mut slot = lock(slot);
        match result {
            Ok(record) => {
                slot.meta.status = RunStatus::Ready;
                slot.state = Some(RunState::initial(&slot.meta, record));
            }
            Err(e) => {
                log::error!("extraction for {run_id} failed: {e}");
                slot.meta.status = RunStatus::Failed;
                slot.meta.error = Some(e);
            }
        }
        if let Err(e) = write_json_atomic(&dir.join(META_FILE), &slot.meta) {
            log::error!("{e}");
        }
    }

    pub fn meta(&self, run_id: &str) -> Result<RunMeta, CurationError> {
        let slot = self.slot(run_id)?;
        let meta = lock(&slot).meta.clone();
        Ok(meta)
    }

    /// A consistent copy of the run's state.
    pub fn state(&self, run_id: &str) -> Result<RunState, CurationError> {
        let slot = self.slot(run_id)?;
        let state = lock(&slot).state.clone();
        state.ok_or_else(|| CurationError::NotReady(run_id.to_string()))
    }

    /// Validates `action` against the current state, appends it to the log
    /// and returns the new state. Nothing is written when it is rejected.
    pub fn submit(&self, run_id: &str, editor: &str, action: Action) -> Result<RunState, CurationError> {
        let slot = self.slot(run_id)?;
        let mut slot = lock(&slot);
        let current = slot.state.as_ref().ok_or_else(|| CurationError::NotReady(run_id.to_string()))?;
        if action == Action::Recompute && current.dirty.is_empty() {
            return Ok(current.clone());
        }
        let last_at = current.events.last().map_or(current.created_at_ms, |e| e.at_ms);
        let event = ReviewEvent { seq: current.last_seq() + 1, at_ms: (self.clock)().max(last_at), editor: editor.to_string(), action };
        let mut next = current.clone();
        next.apply(&event)?;
        let path = self.run_dir(run_id).join(EVENTS_FILE);
        let mut line = serde_json::to_vec(&event).expect("event serializes");
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(CurationError::io(&path))?;
        file.write_all(&line).and_then(|_| file.sync_data()).map_err(CurationError::io(&path))?;
        slot.state = Some(next.clone());
        Ok(next)
    }

    pub fn decide(&self, task_id: &str, editor: &str, decision: Decision) -> Result<RunState, CurationError> {
        let run_id = run_of_task(task_id).ok_or_else(|| CurationError::UnknownTask(task_id.to_string()))?;
        if !lock(&self.runs).contains_key(run_id) {
            return Err(CurationError::UnknownTask(task_id.to_string()));
        }
        self.submit(run_id, editor, Action::Decision { task: task_id.to_string(), decision })
    }

    pub fn recompute(&self, run_id: &str, editor: &str) -> Result<RunState, CurationError> {
        self.submit(run_id, editor, Action::Recompute)
    }
}
