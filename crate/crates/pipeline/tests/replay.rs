//! Replays the recorded `kinase_series` fixture: expected output, byte-level
//! determinism, stage isolation under injected failures and edge inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rust_decimal::Decimal;
use serde::Deserialize;
use serde_json::Value;

use bioextract_core::chem::{parse_smiles, to_canonical_smiles};
use bioextract_core::markush::FailureCause;
use bioextract_core::measure::{AssayType, Relation, Unit};
use bioextract_core::record::{ExtractionRecord, Stage, StageStatus, FLAG_OCSR_FAILED, FLAG_OCSR_INVALID};
use bioextract_pipeline::backend::{BackendError, Envelope, RetryPolicy, Transport};
use bioextract_pipeline::config::PipelineConfig;
use bioextract_pipeline::orchestrator::{record_json, RECORD_FILE, TRIPLETS_FILE};
use bioextract_pipeline::{run_batch, run_document, Backends, Cassette, CassetteMode, DocumentInput, RunOptions};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kinase_series")
}

fn pdf() -> DocumentInput {
    DocumentInput::from_path(fixture().join("kinase_series.pdf"))
}

fn config() -> PipelineConfig {
    PipelineConfig::load(&fixture().join("pipeline.toml")).unwrap()
}

fn no_wait() -> RetryPolicy {
    RetryPolicy { attempts: 3, base_delay_ms: 0 }
}

fn cassette() -> Arc<dyn Transport> {
    Arc::new(Cassette::open(fixture().join("cassette"), CassetteMode::Replay, None).unwrap())
}

fn backends_over(transport: Arc<dyn Transport>) -> Backends {
    let versions = config().backends.iter().map(|(k, v)| (k.clone(), v.version.clone())).collect();
    Backends::new(transport, versions, no_wait())
}

fn replay() -> Backends {
    backends_over(cassette())
}

fn options(out: &Path) -> RunOptions {
    RunOptions::from_config(&config(), out).unwrap()
}

fn canonical(smiles: &str) -> String {
    to_canonical_smiles(&parse_smiles(smiles).unwrap())
}

fn dec(s: &str) -> Decimal {
    Decimal::from_str(s).unwrap()
}

#[derive(Deserialize)]
struct Expected {
    ligand: String,
    smiles: String,
    assay_type: AssayType,
    relation: Relation,
    value: String,
    unit: Unit,
    #[serde(rename = "value_nM")]
    value_nm: String,
}

fn expected() -> Vec<Expected> {
    std::fs::read_to_string(fixture().join("expected_triplets.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Fails every call matching `backend` (and `task`, for the reasoner).
struct FailOn {
    inner: Arc<dyn Transport>,
    backend: &'static str,
    task: Option<&'static str>,
    calls: AtomicUsize,
}

impl FailOn {
    fn new(backend: &'static str, task: Option<&'static str>) -> Arc<Self> {
        Arc::new(FailOn { inner: cassette(), backend, task, calls: AtomicUsize::new(0) })
    }
}

impl Transport for FailOn {
    fn call(&self, request: &Envelope) -> Result<Value, BackendError> {
        let task_matches = self.task.is_none_or(|t| request.payload["task"] == t);
        if request.backend == self.backend && task_matches {
            self.calls.fetch_add(1, Ordering::SeqCst);
            return Err(BackendError::Transport { backend: request.backend.clone(), message: "injected".into() });
        }
        self.inner.call(request)
    }
}

#[test]
fn replay_reproduces_hand_written_triplets() {
    let out = tempfile::tempdir().unwrap();
    let rec = run_document(&pdf(), &replay(), &options(out.path())).unwrap();
    for stage in Stage::ALL {
        assert_eq!(rec.status(stage), StageStatus::Done, "{stage:?}: {:?}", rec.stages[&stage].error);
    }
    let want = expected();
    assert_eq!(rec.triplets.len(), want.len());
    for (got, want) in rec.triplets.iter().zip(&want) {
        let ctx = format!("{} {:?}", want.ligand, want.assay_type);
        assert_eq!(got.protein, "EGFR", "{ctx}");
        assert_eq!(got.smiles, canonical(&want.smiles), "{ctx}");
        assert_eq!(got.assay_type, want.assay_type, "{ctx}");
        assert_eq!(got.relation, want.relation, "{ctx}");
        assert_eq!(got.value, dec(&want.value), "{ctx}");
        assert_eq!(got.unit, want.unit, "{ctx}");
        assert_eq!(got.value_nm, Some(dec(&want.value_nm)), "{ctx}");
    }

    // The OCSR output for the unnamed depiction does not parse.
    let invalid: Vec<_> = rec.detections.iter().filter(|d| d.flags.iter().any(|f| f == FLAG_OCSR_INVALID)).collect();
    assert_eq!(invalid.len(), 1);
    assert!(rec.structures.iter().all(|s| !s.provenance.contains(&invalid[0].id)));

    // Row 3e uses an abbreviation nobody knows; 3d needed the name service.
    assert_eq!(rec.markush_failures.len(), 1);
    assert_eq!(rec.markush_failures[0].1.coreference, "3e");
    assert_eq!(rec.markush_failures[0].1.cause, FailureCause::UnknownAbbreviation);
    assert_eq!(rec.name_resolutions, BTreeMap::from([("cyclobutyl".to_string(), "*C1CCC1".to_string())]));

    // The text repeats compound 1's IC50 in µM; it merges into the table row.
    let ic50_1: Vec<_> = rec
        .measurements
        .iter()
        .filter(|m| m.ligand_coreference == "1" && m.assay_type == AssayType::IC50)
        .collect();
    assert_eq!(ic50_1.len(), 1);
    let regions: Vec<&str> = ic50_1[0].provenance.iter().map(|p| p.region.as_str()).collect();
    assert_eq!(regions, ["t1", "p1-s1"]);

    // "IC50 > 10 µM" for 99 has no structure; "inactive" is not a value.
    let unmatched: Vec<&str> =
        rec.unmatched_measurements.iter().map(|&i| rec.measurements[i].ligand_coreference.as_str()).collect();
    assert_eq!(unmatched, ["99"]);
    assert_eq!(rec.measurements.iter().find(|m| m.ligand_coreference == "99").unwrap().relation, Relation::Gt);
    assert_eq!(rec.warnings.get("measurement.unparseable"), Some(&1));
    assert!(rec.provenance_resolves());
}

#[test]
fn outputs_are_byte_identical_across_runs_and_worker_counts() {
    // Companion inputs reuse the parsed document under other ids, so a batch
    // keeps several workers busy while every backend call replays.
    let scratch = tempfile::tempdir().unwrap();
    let first = run_document(&pdf(), &replay(), &options(scratch.path())).unwrap();
    let mut inputs = vec![pdf()];
    for i in 1..=3 {
        let mut parsed = first.parsed.clone();
        parsed.doc_id = format!("copy-{i}");
        let path = scratch.path().join(format!("copy-{i}.json"));
        std::fs::write(&path, serde_json::to_vec(&parsed).unwrap()).unwrap();
        inputs.push(DocumentInput::from_path(path));
    }

    let mut outputs: Vec<BTreeMap<String, (Vec<u8>, Vec<u8>)>> = Vec::new();
    for run in 0..10 {
        let workers = if run % 2 == 0 { 1 } else { 4 };
        let out = tempfile::tempdir().unwrap();
        let results = run_batch(&inputs, &replay(), &options(out.path()), workers);
        let mut files = BTreeMap::new();
        for r in results {
            let rec = r.unwrap();
            let dir = out.path().join(&rec.doc_id);
            let record = std::fs::read(dir.join(RECORD_FILE)).unwrap();
            assert_eq!(record, record_json(&rec).into_bytes());
            files.insert(rec.doc_id.clone(), (record, std::fs::read(dir.join(TRIPLETS_FILE)).unwrap()));
        }
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 4);
    for (run, files) in outputs.iter().enumerate().skip(1) {
        assert!(files == &outputs[0], "run {run} differs from run 0");
    }
    let triplets = |id: &str| outputs[0][id].1.clone();
    for i in 1..=3 {
        assert_eq!(triplets(&format!("copy-{i}")), triplets("kinase_series"));
    }
}

#[test]
fn detector_failure_keeps_measurements() {
    let out = tempfile::tempdir().unwrap();
    let t = FailOn::new("detector", None);
    let rec = run_document(&pdf(), &backends_over(t.clone()), &options(out.path())).unwrap();
    assert_eq!(rec.status(Stage::Detect), StageStatus::Failed);
    for s in [Stage::Ocsr, Stage::Coreference, Stage::Markush] {
        assert_eq!(rec.status(s), StageStatus::Skipped);
    }
    assert_eq!(rec.status(Stage::Measurement), StageStatus::Done);
    assert_eq!(rec.status(Stage::Integration), StageStatus::Done);
    // 15 statements: one merged duplicate and one non-value drop out.
    assert_eq!(rec.measurements.len(), 13);
    assert!(rec.triplets.is_empty());
    assert_eq!(rec.unmatched_measurements.len(), 13);
    // Transport failures are retried before giving up.
    assert_eq!(t.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn ocsr_failure_flags_every_depiction() {
    let out = tempfile::tempdir().unwrap();
    let rec = run_document(&pdf(), &backends_over(FailOn::new("ocsr", None)), &options(out.path())).unwrap();
    assert_eq!(rec.detections.len(), 4);
    assert!(rec.detections.iter().all(|d| d.flags == [FLAG_OCSR_FAILED]));
    assert!(rec.structures.is_empty());
    assert!(rec.markush_jobs.is_empty());
    assert_eq!(rec.measurements.len(), 13);
    assert_eq!(rec.status(Stage::Integration), StageStatus::Done);
}

#[test]
fn measurement_failure_keeps_structures() {
    let out = tempfile::tempdir().unwrap();
    let rec =
        run_document(&pdf(), &backends_over(FailOn::new("reasoner", Some("measurements"))), &options(out.path())).unwrap();
    assert_eq!(rec.status(Stage::Measurement), StageStatus::Failed);
    assert_eq!(rec.status(Stage::Markush), StageStatus::Done);
    let names: Vec<&str> = rec.structures.iter().map(|s| s.coreference.as_str()).collect();
    assert_eq!(names, ["1", "2", "3a", "3b", "3c", "3d"]);
    assert!(rec.triplets.is_empty());
    assert_eq!(rec.unmatched_structures.len(), 6);
    assert_eq!(rec.warnings.get("measurement.text.failed"), Some(&2));
}

#[test]
fn markush_failure_keeps_explicit_structures() {
    let out = tempfile::tempdir().unwrap();
    let rec = run_document(&pdf(), &backends_over(FailOn::new("reasoner", Some("markush"))), &options(out.path())).unwrap();
    assert_eq!(rec.status(Stage::Markush), StageStatus::Failed);
    let names: Vec<&str> = rec.structures.iter().map(|s| s.coreference.as_str()).collect();
    assert_eq!(names, ["1", "2"]);
    assert_eq!(rec.triplets.len(), 4);
}

#[test]
fn parser_failure_skips_everything_and_still_persists() {
    let out = tempfile::tempdir().unwrap();
    let rec = run_document(&pdf(), &backends_over(FailOn::new("parser", None)), &options(out.path())).unwrap();
    assert_eq!(rec.status(Stage::Parse), StageStatus::Failed);
    for s in &Stage::ALL[1..] {
        assert_eq!(rec.status(*s), StageStatus::Skipped);
    }
    let stored: ExtractionRecord =
        serde_json::from_slice(&std::fs::read(out.path().join("kinase_series").join(RECORD_FILE)).unwrap()).unwrap();
    assert_eq!(stored, rec);
    assert_eq!(std::fs::read(out.path().join("kinase_series").join(TRIPLETS_FILE)).unwrap(), b"");
}

#[test]
fn changed_backend_version_misses_the_cassette() {
    let mut versions: BTreeMap<String, String> =
        config().backends.iter().map(|(k, v)| (k.clone(), v.version.clone())).collect();
    versions.insert("ocsr".into(), "ocsr-2".into());
    let backends = Backends::new(cassette(), versions, no_wait());
    let out = tempfile::tempdir().unwrap();
    let rec = run_document(&pdf(), &backends, &options(out.path())).unwrap();
    assert!(rec.detections.iter().all(|d| d.flags == [FLAG_OCSR_FAILED]));
    assert_eq!(rec.backends["ocsr"], "ocsr-2");
}

struct Refuse;

impl Transport for Refuse {
    fn call(&self, request: &Envelope) -> Result<Value, BackendError> {
        panic!("unexpected backend call to {}", request.backend);
    }
}

#[test]
fn empty_document_runs_without_backend_calls() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, r#"{"doc_id": "empty"}"#).unwrap();
    let rec = run_document(&DocumentInput::from_path(&path), &backends_over(Arc::new(Refuse)), &options(dir.path())).unwrap();
    for stage in Stage::ALL {
        assert_eq!(rec.status(stage), StageStatus::Done);
    }
    assert!(rec.triplets.is_empty() && rec.structures.is_empty() && rec.measurements.is_empty());
}

#[test]
fn malformed_parsed_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "[1, 2").unwrap();
    assert!(run_document(&DocumentInput::from_path(&path), &replay(), &options(dir.path())).is_err());
}
