#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bioextract_core::chem::{parse_smiles, to_canonical_smiles};
use bioextract_core::record::ExtractionRecord;
use bioextract_curation::{ReviewStage, RunState, RunStore, TaskStatus};
use bioextract_pipeline::backend::RetryPolicy;
use bioextract_pipeline::config::PipelineConfig;
use bioextract_pipeline::{run_document, Backends, Cassette, CassetteMode, DocumentInput, RunOptions};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../pipeline/tests/fixtures/kinase_series")
}

pub fn fixture_pdf() -> PathBuf {
    fixture_dir().join("kinase_series.pdf")
}

/// Backends that replay the pipeline fixture's cassette.
pub fn replay_backends() -> Backends {
    let cfg = PipelineConfig::load(&fixture_dir().join("pipeline.toml")).unwrap();
    let versions = cfg.backends.iter().map(|(k, v)| (k.clone(), v.version.clone())).collect();
    let cassette = Cassette::open(fixture_dir().join("cassette"), CassetteMode::Replay, None).unwrap();
    Backends::new(Arc::new(cassette), versions, RetryPolicy { attempts: 1, base_delay_ms: 0 })
}

/// The fixture document's extraction record.
pub fn fixture_record() -> ExtractionRecord {
    let out = tempfile::tempdir().unwrap();
    run_document(&DocumentInput::from_path(fixture_pdf()), &replay_backends(), &RunOptions::new(out.path())).unwrap()
}

/// A clock that advances one second per reading.
pub fn stepping_clock() -> impl Fn() -> u64 + Send + Sync + 'static {
    let t = AtomicU64::new(1_700_000_000_000);
    move || t.fetch_add(1_000, Ordering::SeqCst)
}

pub fn store(root: &Path) -> Arc<RunStore> {
    Arc::new(RunStore::open(root, None).unwrap().with_clock(stepping_clock()))
}

pub fn canonical(smiles: &str) -> String {
    to_canonical_smiles(&parse_smiles(smiles).unwrap())
}

pub fn pending(state: &RunState, stage: ReviewStage) -> Vec<String> {
    state.list_tasks(Some(stage)).into_iter().filter(|t| t.status == TaskStatus::Pending).map(|t| t.id.clone()).collect()
}
