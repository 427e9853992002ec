//! HTTP API exercised in-process through the router.

mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use bioextract_curation::api::{router, EDITOR_HEADER};
use bioextract_curation::{Pipeline, RunStore};
use bioextract_pipeline::RunOptions;
use common::*;

struct Reply {
    status: StatusCode,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

async fn call(app: &Router, method: Method, uri: &str, editor: Option<&str>, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(e) = editor {
        req = req.header(EDITOR_HEADER, e);
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type =
        resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, body }
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some("reviewer-1"), Some(body)).await
}

async fn create(app: &Router, queries: &[&str]) -> String {
    let r = post(app, "/runs", json!({"schema_version": 1, "record": fixture_record(), "annotation_queries": queries})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    r.json()["run_id"].as_str().unwrap().to_string()
}

async fn accept_stage(app: &Router, run: &str, stage: &str) {
    let tasks = get(app, &format!("/runs/{run}/tasks?stage={stage}")).await.json();
    for t in tasks["tasks"].as_array().unwrap() {
        if t["status"] == "pending" {
            let id = t["id"].as_str().unwrap();
            let r = post(app, &format!("/tasks/{id}/decision"), json!({"decision": "accept"})).await;
            assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
        }
    }
}

fn app_for(root: &std::path::Path) -> (Router, Arc<RunStore>) {
    let store = store(root);
    (router(store.clone()), store)
}

#[tokio::test]
async fn runs_can_be_created_listed_and_fetched() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_for(dir.path());
    let run = create(&app, &[]).await;
    let again = post(&app, "/runs", json!({"record": fixture_record()})).await;
    assert_eq!(again.status, StatusCode::OK);
    assert_eq!(again.json()["duplicate"], true);

    let list = get(&app, "/runs").await.json();
    assert_eq!(list["schema_version"], 1);
    assert_eq!(list["runs"][0]["run_id"], run.as_str());
    let view = get(&app, &format!("/runs/{run}")).await.json();
    assert_eq!(view["status"], "ready");
    assert_eq!(view["review"]["last_seq"], 0);
    assert_eq!(view["review"]["counts"]["measurement"]["total"], 13);
    assert_eq!(view["review"]["record"]["triplets"].as_array().unwrap().len(), 12);
    assert_eq!(get(&app, "/runs/run-missing").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn request_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_for(dir.path());
    let run = create(&app, &[]).await;
    let task = format!("/tasks/{run}.ocsr.0/decision");

    let r = post(&app, "/runs", json!({"schema_version": 2, "record": fixture_record()})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = post(&app, "/runs", json!({})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = call(&app, Method::POST, &task, None, Some(json!({"decision": "accept"}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "bad_request");
    let r = post(&app, &task, json!({"schema_version": 9, "decision": "accept"})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, &format!("/runs/{run}/tasks?stage=bogus")).await.status, StatusCode::BAD_REQUEST);

    let r = post(&app, &task, json!({"decision": "edit", "payload": {"smiles": "C1CC"}})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["error"], "invalid_payload");
    assert_eq!(post(&app, &task, json!({"decision": "accept"})).await.status, StatusCode::OK);
    let r = post(&app, &task, json!({"decision": "reject"})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "terminal_task");
    let r = post(&app, &format!("/tasks/{run}.ocsr.77/decision"), json!({"decision": "accept"})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn markush_preview_fixes_the_unknown_abbreviation() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_for(dir.path());
    let run = create(&app, &[]).await;
    let uri = format!("/runs/{run}/preview/markush");

    let stored = post(&app, &uri, json!({"scaffold": 3})).await.json();
    let rows = stored["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4]["coreference"], "3e");
    assert_eq!(rows[4]["failure"]["cause"], "unknown_abbreviation");
    assert!(rows[4].get("smiles").is_none());

    let cell = json!({"row": 4, "label": "R1", "substituent": {"kind": "abbreviation", "value": "iPr"}});
    let fixed = post(&app, &uri, json!({"schema_version": 1, "scaffold": 3, "cells": [cell]})).await.json();
    assert_eq!(fixed["rows"][4]["smiles"], canonical("CC(C)NC(=O)c1ccccc1").as_str());
    assert_eq!(fixed["rows"][0]["smiles"], canonical("CNC(=O)c1ccccc1").as_str());
    // A preview appends nothing to the log.
    assert_eq!(get(&app, &format!("/runs/{run}")).await.json()["review"]["last_seq"], 0);

    let table = json!({"rows": [{"coreference": "9z", "assignment": {"R1": {"kind": "abbreviation", "value": "Et"}, "R2": {"kind": "hydrogen"}}}]});
    let custom = post(&app, &uri, json!({"scaffold": 3, "table": table})).await.json();
    assert_eq!(custom["rows"][0]["smiles"], canonical("CCNC(=O)c1ccccc1").as_str());

    assert_eq!(post(&app, &uri, json!({"scaffold": 0})).await.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn page_images_are_svg_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_for(dir.path());
    let run = create(&app, &[]).await;
    let r = get(&app, &format!("/runs/{run}/pages/1/image")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type, "image/svg+xml");
    let svg = String::from_utf8(r.body).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<rect").count(), 3);
    assert_eq!(get(&app, &format!("/runs/{run}/pages/40/image")).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn full_review_exports_json_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_for(dir.path());
    let run = create(&app, &["CCNC(=O)c1ccc(F)cc1"]).await;
    let export = format!("/runs/{run}/export");
    let r = get(&app, &export).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "not_exportable");

    let ann = get(&app, &format!("/runs/{run}/annotation?query_smiles=CCNC(%3DO)c1ccc(F)cc1")).await.json();
    assert_eq!(ann["candidates"][0]["perfect_match"], true);
    assert_eq!(get(&app, &format!("/runs/{run}/annotation?query_smiles=C1CC")).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    for stage in ["detection", "ocsr", "coreference"] {
        accept_stage(&app, &run, stage).await;
    }
    let cell = json!({"row": 4, "label": "R1", "substituent": {"kind": "abbreviation", "value": "iPr"}});
    let r = post(&app, &format!("/tasks/{run}.markush.3/decision"), json!({"decision": "edit", "payload": {"cells": [cell]}})).await;
    assert_eq!(r.json()["review"]["dirty"], json!(["markush", "integration", "annotation"]));
    let m = json!({"protein": "EGFR", "ligand_coreference": "3e", "assay_type": "IC50", "relation": "=",
                   "value": "2", "unit": "uM", "modality": "table", "provenance": []});
    let r = post(&app, &format!("/runs/{run}/insert"), json!({"stage": "measurement", "payload": {"measurement": m}})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    let r = post(&app, &format!("/runs/{run}/waive"), json!({"stage": "measurement"})).await;
    assert_eq!(r.json()["review"]["waived"], json!(["measurement"]));
    accept_stage(&app, &run, "annotation").await;

    let r = get(&app, &export).await;
    assert_eq!(r.json()["error"], "dirty");
    let r = call(&app, Method::POST, &format!("/runs/{run}/recompute"), Some("reviewer-1"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["review"]["export_version"], 1);

    let bundle = get(&app, &export).await;
    assert_eq!(bundle.content_type, "application/json");
    let b = bundle.json();
    assert_eq!(b["partial"], true);
    assert_eq!(b["triplets"].as_array().unwrap().len(), 13);
    // Repeated exports are byte-identical.
    assert_eq!(get(&app, &export).await.body, bundle.body);

    let lines = get(&app, &format!("{export}?format=jsonl")).await;
    assert_eq!(lines.content_type, "application/x-ndjson");
    let text = String::from_utf8(lines.body).unwrap();
    assert_eq!(text.lines().count(), 13);
    let iso = canonical("CC(C)NC(=O)c1ccccc1");
    assert_eq!(text.lines().filter(|l| l.contains(&format!("\"{iso}\""))).count(), 1);
    assert_eq!(get(&app, &format!("{export}?format=csv")).await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn recompute_conflicts_map_to_409() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_for(dir.path());
    let run = create(&app, &[]).await;
    let r = post(&app, &format!("/tasks/{run}.coreference.0/decision"), json!({"decision": "edit", "payload": {"coreference": "1x"}})).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = call(&app, Method::POST, &format!("/runs/{run}/recompute"), Some("r"), None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "pending_upstream");
    let r = call(&app, Method::POST, &format!("/runs/{run}/recompute"), None, None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn documents_are_extracted_in_the_background() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline { backends: Arc::new(replay_backends()), options: RunOptions::new(dir.path().join("unused")) };
    let store = Arc::new(RunStore::open(dir.path().join("runs"), Some(pipeline)).unwrap().with_clock(stepping_clock()));
    let app = router(store);
    let pdf = fixture_pdf();
    let r = post(&app, "/runs", json!({"document": pdf})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let run = r.json()["run_id"].as_str().unwrap().to_string();

    let mut view = Value::Null;
    for _ in 0..200 {
        view = get(&app, &format!("/runs/{run}")).await.json();
        if view["status"] != "processing" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    assert_eq!(view["status"], "ready", "{view}");
    assert_eq!(view["review"]["record"]["triplets"], serde_json::to_value(fixture_record().triplets).unwrap());
    let missing = post(&app, "/runs", json!({"document": "/no/such.pdf"})).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}
