//! Review workflow over the pipeline fixture: task lists, decisions, dirty
//! rules, recompute against hand-computed triplets and export rules.

mod common;

use std::str::FromStr;

use rust_decimal::Decimal;
use serde_json::json;

use bioextract_core::markush::FailureCause;
use bioextract_core::measure::{AssayType, Measurement, Modality, Relation, Unit};
use bioextract_curation::store::{read_events, EVENTS_FILE};
use bioextract_curation::{Action, CurationError, Decision, DerivedStage, ReviewStage, RunSource, RunState, RunStore, TaskStatus};
use common::*;

const EDITOR: &str = "reviewer-1";

fn dec(s: &str) -> Decimal {
    Decimal::from_str(s).unwrap()
}

fn new_run(store: &std::sync::Arc<RunStore>, queries: &[&str]) -> String {
    let queries = queries.iter().map(|q| q.to_string()).collect();
    store.create_run(RunSource::Record(Box::new(fixture_record())), queries).unwrap().run_id
}

fn accept_all(store: &RunStore, run: &str, stage: ReviewStage) -> RunState {
    let mut state = store.state(run).unwrap();
    for id in pending(&state, stage) {
        state = store.decide(&id, EDITOR, Decision::Accept).unwrap();
    }
    state
}

fn edit(payload: serde_json::Value) -> Decision {
    Decision::Edit { payload }
}

fn measurement_index(state: &RunState, ligand: &str, assay: AssayType) -> usize {
    state
        .measurements
        .iter()
        .position(|m| m.measurement.ligand_coreference == ligand && m.measurement.assay_type == assay)
        .unwrap()
}

fn abbr(s: &str) -> serde_json::Value {
    json!({"kind": "abbreviation", "value": s})
}

#[test]
fn tasks_mirror_the_record_in_reading_order() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let state = store.state(&run).unwrap();
    let counts = state.counts();
    assert_eq!(counts[&ReviewStage::Detection].total, 4);
    assert_eq!(counts[&ReviewStage::Ocsr].total, 4);
    assert_eq!(counts[&ReviewStage::Coreference].total, 4);
    assert_eq!(counts[&ReviewStage::Markush].total, 1);
    assert_eq!(counts[&ReviewStage::Measurement].total, 13);
    assert_eq!(counts[&ReviewStage::Annotation].total, 0);
    assert!(state.list_tasks(Some(ReviewStage::Annotation)).is_empty());

    let all = state.list_tasks(None);
    assert!(all.windows(2).all(|w| w[0].stage <= w[1].stage));
    let ocsr: Vec<&str> = state.list_tasks(Some(ReviewStage::Ocsr)).iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ocsr, [0, 1, 2, 3].map(|i| format!("{run}.ocsr.{i}")));
    // Measurements follow the document: page 1 text before the page 2 table.
    let first = state.list_tasks(Some(ReviewStage::Measurement))[0].target;
    let bioextract_curation::TaskTarget::Measurement(i) = first else { panic!() };
    assert_eq!(state.measurements[i].measurement.provenance[0].page, 1);
}

#[test]
fn accepting_ocsr_marks_nothing_dirty() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let state = accept_all(&store, &run, ReviewStage::Ocsr);
    assert!(state.dirty.is_empty());
    assert_eq!(state.counts()[&ReviewStage::Ocsr].accepted, 4);
    assert_eq!(state.last_seq(), 4);
}

#[test]
fn invalid_smiles_edit_is_refused_and_not_logged() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let task = format!("{run}.ocsr.1");
    let err = store.decide(&task, EDITOR, edit(json!({"smiles": "C1CC"}))).unwrap_err();
    assert!(matches!(err, CurationError::InvalidPayload(_)), "{err}");
    let state = store.state(&run).unwrap();
    assert_eq!(state.task(&task).unwrap().status, TaskStatus::Pending);
    assert_eq!(state.last_seq(), 0);
    assert!(read_events(&store.run_dir(&run).join(EVENTS_FILE)).unwrap().is_empty());
    // Wrong shape for the stage.
    let err = store.decide(&task, EDITOR, edit(json!({"coreference": "x"}))).unwrap_err();
    assert!(matches!(err, CurationError::InvalidPayload(_)));
    // Boxes must stay on the page.
    let err = store.decide(&format!("{run}.detection.0"), EDITOR, edit(json!({"box": [0.5, 0.5, 1.2, 0.6]}))).unwrap_err();
    assert!(matches!(err, CurationError::InvalidPayload(_)));
}

#[test]
fn decided_tasks_cannot_be_decided_again() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let task = format!("{run}.detection.0");
    store.decide(&task, EDITOR, Decision::Accept).unwrap();
    let err = store.decide(&task, "someone-else", Decision::Reject).unwrap_err();
    assert!(matches!(err, CurationError::TerminalTask { .. }));
    let t = store.state(&run).unwrap().task(&task).unwrap().clone();
    assert_eq!((t.status, t.editor.as_deref()), (TaskStatus::Accepted, Some(EDITOR)));
    assert!(matches!(store.decide("run-nope.ocsr.0", EDITOR, Decision::Accept), Err(CurationError::UnknownTask(_))));
    assert!(matches!(store.decide(&format!("{run}.ocsr.99"), EDITOR, Decision::Accept), Err(CurationError::UnknownTask(_))));
}

#[test]
fn markush_cell_edit_dirties_markush_and_integration() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let state = store
        .decide(&format!("{run}.markush.3"), EDITOR, edit(json!({"cells": [{"row": 1, "label": "R2", "substituent": abbr("Cl")}]})))
        .unwrap();
    assert_eq!(state.dirty.iter().copied().collect::<Vec<_>>(), [DerivedStage::Markush, DerivedStage::Integration]);

    // With annotation queries, ranking is dirtied too.
    let dir = tempfile::tempdir().unwrap();
    let store = common::store(dir.path());
    let run = new_run(&store, &["CCNC(=O)c1ccc(F)cc1"]);
    let state = store.decide(&format!("{run}.measurement.0"), EDITOR, Decision::Reject).unwrap();
    assert_eq!(state.dirty.iter().copied().collect::<Vec<_>>(), [DerivedStage::Integration, DerivedStage::Annotation]);
}

#[test]
fn unresolvable_cell_edits_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let task = format!("{run}.markush.3");
    for cells in [
        json!([{"row": 4, "label": "R1", "substituent": abbr("Qq")}]),
        json!([{"row": 9, "label": "R1", "substituent": abbr("Me")}]),
        json!([{"row": 0, "label": " ", "substituent": abbr("Me")}]),
        json!([{"row": 0, "label": "R1", "substituent": {"kind": "iupac_name", "value": "never resolved"}}]),
        json!([{"row": 0, "label": "R1", "substituent": {"kind": "fragment_smiles", "value": "CC"}}]),
    ] {
        let err = store.decide(&task, EDITOR, edit(json!({ "cells": cells }))).unwrap_err();
        assert!(matches!(err, CurationError::InvalidPayload(_)), "{cells}: {err}");
    }
    // Names resolved during extraction may be reused.
    store
        .decide(&task, EDITOR, edit(json!({"cells": [{"row": 0, "label": "R1", "substituent": {"kind": "iupac_name", "value": "cyclobutyl"}}]})))
        .unwrap();
}

/// Drives every stage to a terminal state with a known set of edits.
fn review_with_edits(store: &RunStore, run: &str) -> RunState {
    accept_all(store, run, ReviewStage::Detection);
    // Compound 2 is really the methyl ester; the unreadable depiction goes.
    store.decide(&format!("{run}.ocsr.1"), EDITOR, edit(json!({"smiles": "CC(=O)Oc1ccccc1C(=O)OC"}))).unwrap();
    store.decide(&format!("{run}.ocsr.2"), EDITOR, Decision::Reject).unwrap();
    accept_all(store, run, ReviewStage::Ocsr);
    accept_all(store, run, ReviewStage::Coreference);
    // 3b carries Cl rather than F; 3e's unknown "Xyz" is isopropyl.
    store
        .decide(
            &format!("{run}.markush.3"),
            EDITOR,
            edit(json!({"cells": [
                {"row": 1, "label": "R2", "substituent": abbr("Cl")},
                {"row": 4, "label": "R1", "substituent": abbr("iPr")}
            ]})),
        )
        .unwrap();
    let state = store.state(run).unwrap();
    let ki_2 = measurement_index(&state, "2", AssayType::Ki);
    store.decide(&format!("{run}.measurement.{ki_2}"), EDITOR, Decision::Reject).unwrap();
    let ic50_3a = measurement_index(&state, "3a", AssayType::IC50);
    let mut m = state.measurements[ic50_3a].measurement.clone();
    m.value = dec("45");
    store.decide(&format!("{run}.measurement.{ic50_3a}"), EDITOR, edit(json!({ "measurement": m }))).unwrap();
    let inserted = Measurement {
        protein: "EGFR".into(),
        ligand_coreference: "3e".into(),
        assay_type: AssayType::IC50,
        relation: Relation::Eq,
        value: dec("2"),
        unit: Unit::MicroMolar,
        modality: Modality::Table,
        provenance: vec![],
        uncertainty: None,
        range: None,
    };
    store
        .submit(run, EDITOR, Action::Insert { stage: ReviewStage::Measurement, payload: json!({ "measurement": inserted }) })
        .unwrap();
    accept_all(store, run, ReviewStage::Measurement)
}

#[test]
fn recompute_reflects_the_edits() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let before = store.state(&run).unwrap().record.triplets.clone();
    let state = review_with_edits(&store, &run);
    // Derived output is stale until recompute.
    assert_eq!(state.record.triplets, before);
    assert!(matches!(state.export(), Err(CurationError::Dirty(_))));

    let state = store.recompute(&run, EDITOR).unwrap();
    assert!(state.dirty.is_empty());
    assert_eq!(state.export_version, 1);
    let got: Vec<(String, AssayType, Decimal)> =
        state.record.triplets.iter().map(|t| (t.smiles.clone(), t.assay_type.clone(), t.value_nm.unwrap())).collect();
    let want: Vec<(String, AssayType, Decimal)> = [
        ("O[C@H](C)c1ccccc1", AssayType::IC50, "30"),
        ("COC(=O)c1ccccc1OC(C)=O", AssayType::IC50, "120"),
        ("CNC(=O)c1ccccc1", AssayType::IC50, "45"),
        ("CCNC(=O)c1ccc(Cl)cc1", AssayType::IC50, "1200"),
        ("Clc1ccc(cc1)C(=O)NC1CC1", AssayType::IC50, "85"),
        ("COc1ccc(cc1)C(=O)NC1CCC1", AssayType::IC50, "9.5"),
        ("O[C@H](C)c1ccccc1", AssayType::Ki, "12"),
        ("CNC(=O)c1ccccc1", AssayType::EC50, "2100"),
        ("CCNC(=O)c1ccc(Cl)cc1", AssayType::EC50, "5000"),
        ("Clc1ccc(cc1)C(=O)NC1CC1", AssayType::EC50, "800"),
        ("COc1ccc(cc1)C(=O)NC1CCC1", AssayType::EC50, "150"),
        ("CC(C)NC(=O)c1ccccc1", AssayType::IC50, "2000"),
    ]
    .into_iter()
    .map(|(s, a, v)| (canonical(s), a, dec(v)))
    .collect();
    assert_eq!(got, want);
    assert!(state.record.markush_failures.is_empty());
    // Only the "IC50 > 10 µM" statement for 99 stays unmatched.
    assert_eq!(state.record.unmatched_measurements.len(), 1);

    let bundle = state.export().unwrap();
    assert!(!bundle.partial);
    assert_eq!(bundle.triplets, state.record.triplets);
    assert_eq!(bundle.events.len() as u64, state.last_seq());
    assert_eq!(bundle.timing[&ReviewStage::Detection].events, 4);
    assert_eq!(bundle.timing[&ReviewStage::Measurement].events, 14);
    // The stepping clock charges one second to each event.
    assert_eq!(bundle.timing[&ReviewStage::Ocsr].median_ms, 1000.0);
}

#[test]
fn recompute_without_dirty_stages_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    accept_all(&store, &run, ReviewStage::Detection);
    let state = store.recompute(&run, EDITOR).unwrap();
    assert_eq!((state.export_version, state.last_seq()), (0, 4));
}

#[test]
fn recompute_waits_for_upstream_review() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    store.decide(&format!("{run}.markush.3"), EDITOR, edit(json!({"cells": [{"row": 4, "label": "R1", "substituent": abbr("iPr")}]}))).unwrap();
    let err = store.recompute(&run, EDITOR).unwrap_err();
    let CurationError::PendingUpstream(stages) = err else { panic!("{err}") };
    assert_eq!(stages, [ReviewStage::Detection, ReviewStage::Ocsr, ReviewStage::Coreference]);
    for s in [ReviewStage::Detection, ReviewStage::Ocsr, ReviewStage::Coreference] {
        accept_all(&store, &run, s);
    }
    // Pending measurement review is downstream of the edit and does not block.
    let state = store.recompute(&run, EDITOR).unwrap();
    let names: Vec<&str> = state.record.structures.iter().map(|s| s.coreference.as_str()).collect();
    assert!(names.contains(&"3e"));
}

#[test]
fn export_requires_review_or_waiver() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    let Err(CurationError::NotExportable(open)) = store.state(&run).unwrap().export() else { panic!() };
    assert_eq!(open.len(), 5);
    for s in &ReviewStage::ALL[..4] {
        accept_all(&store, &run, *s);
    }
    assert!(matches!(store.state(&run).unwrap().export(), Err(CurationError::NotExportable(s)) if s == [ReviewStage::Measurement]));
    let state = store.submit(&run, EDITOR, Action::Waive { stage: ReviewStage::Measurement }).unwrap();
    let bundle = state.export().unwrap();
    assert!(bundle.partial);
    assert_eq!(bundle.waived, [ReviewStage::Measurement]);
    assert_eq!(bundle.task_counts[&ReviewStage::Measurement].pending, 13);
    assert_eq!(bundle.triplets, fixture_record().triplets);
}

#[test]
fn annotation_review_picks_the_planted_match() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let query = "CCNC(=O)c1ccc(F)cc1";
    let run = new_run(&store, &[query]);
    let state = store.state(&run).unwrap();
    let top = &state.annotations[0].candidates[0];
    assert!(top.perfect_match && top.exact_match);
    assert_eq!(top.triplet.smiles, canonical(query));
    let state = store.decide(&format!("{run}.annotation.0"), EDITOR, Decision::Accept).unwrap();
    assert_eq!(state.annotations[0].pick.as_ref().unwrap().smiles, canonical(query));
    assert_eq!(state.annotations[0].pick_rank, Some(1));

    let run2 = {
        let mut rec = fixture_record();
        rec.source_digest = "other".into();
        store.create_run(RunSource::Record(Box::new(rec)), vec![query.into()]).unwrap().run_id
    };
    let err = store.decide(&format!("{run2}.annotation.0"), EDITOR, edit(json!({"pick": 99}))).unwrap_err();
    assert!(matches!(err, CurationError::InvalidPayload(_)));
    let state = store.decide(&format!("{run2}.annotation.0"), EDITOR, edit(json!({"pick": null}))).unwrap();
    assert_eq!(state.annotations[0].pick, None);
}

#[test]
fn same_digest_returns_the_existing_run() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let first = store.create_run(RunSource::Record(Box::new(fixture_record())), vec![]).unwrap();
    let again = store.create_run(RunSource::Record(Box::new(fixture_record())), vec![]).unwrap();
    assert!(!first.duplicate && again.duplicate);
    assert_eq!(first.run_id, again.run_id);
    assert_eq!(store.run_ids(), [first.run_id.clone()]);
    let missing = store.create_run(RunSource::Document("/no/such/file.pdf".into()), vec![]);
    assert!(matches!(missing, Err(CurationError::DocumentNotFound(_))));
    // The record was extracted from this PDF, so the digests coincide.
    let same_pdf = store.create_run(RunSource::Document(fixture_pdf()), vec![]).unwrap();
    assert!(same_pdf.duplicate);
    assert_eq!(same_pdf.run_id, first.run_id);
    let fresh = tempfile::tempdir().unwrap();
    let no_pipeline = common::store(fresh.path()).create_run(RunSource::Document(fixture_pdf()), vec![]);
    assert!(matches!(no_pipeline, Err(CurationError::NoPipeline)));
    let bad_query = store.create_run(RunSource::Record(Box::new(fixture_record())), vec!["C1CC".into()]);
    assert!(matches!(bad_query, Err(CurationError::InvalidPayload(_))));
}

#[test]
fn inserted_structures_join_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    for s in &ReviewStage::ALL[..5] {
        accept_all(&store, &run, *s);
    }
    // 99 was reported without a depiction.
    store
        .submit(
            &run,
            EDITOR,
            Action::Insert { stage: ReviewStage::Coreference, payload: json!({"coreference": "99", "smiles": "c1ccc2ccccc2c1"}) },
        )
        .unwrap();
    let err = store
        .submit(&run, EDITOR, Action::Insert { stage: ReviewStage::Ocsr, payload: json!({"smiles": "C"}) })
        .unwrap_err();
    assert!(matches!(err, CurationError::InvalidPayload(_)));
    let state = store.recompute(&run, EDITOR).unwrap();
    let t = state.record.triplets.iter().find(|t| t.smiles == canonical("c1ccc2ccccc2c1")).unwrap();
    assert_eq!(t.relation, Relation::Gt);
    assert!(state.record.unmatched_measurements.is_empty());
    assert_eq!(state.record.markush_failures.len(), 1);
    assert_eq!(state.record.markush_failures[0].1.cause, FailureCause::UnknownAbbreviation);
    let inserted: Vec<_> = state.tasks.iter().filter(|t| t.inserted).collect();
    assert_eq!(inserted.len(), 1);
    assert_eq!(inserted[0].status, TaskStatus::Accepted);
}

#[test]
fn rejected_detection_drops_its_structure() {
    let dir = tempfile::tempdir().unwrap();
    let store = store(dir.path());
    let run = new_run(&store, &[]);
    store.decide(&format!("{run}.detection.0"), EDITOR, Decision::Reject).unwrap();
    for s in &ReviewStage::ALL[..5] {
        accept_all(&store, &run, *s);
    }
    let state = store.recompute(&run, EDITOR).unwrap();
    assert!(state.record.structures.iter().all(|s| s.coreference != "1"));
    assert_eq!(state.record.triplets.len(), 10);
    let svg = bioextract_curation::render::page_svg(&state, 1).unwrap();
    assert_eq!(svg.matches("stroke-dasharray").count(), 1);
}
