//! Re-records the cassette of the `kinase_series` test fixture from a
//! scripted responder that plays every backend by hand.
//!
//! ```text
//! cargo run -p bioextract-pipeline --example record_fixture
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use bioextract_core::PageBox;
use bioextract_pipeline::backend::{BackendError, Envelope, Transport};
use bioextract_pipeline::config::PipelineConfig;
use bioextract_pipeline::{orchestrator, Cassette, CassetteMode, DocumentInput, RunOptions};

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> PageBox {
    PageBox { x0, y0, x1, y1 }
}

/// Depictions on the pages: (page, box, recognized SMILES, name in the text).
fn depictions() -> Vec<(u32, PageBox, Option<&'static str>, &'static str)> {
    vec![
        (1, bx(0.10, 0.10, 0.30, 0.25), Some("C[C@@H](O)c1ccccc1"), "1"),
        (1, bx(0.50, 0.10, 0.70, 0.25), Some("CC(=O)Oc1ccccc1C(=O)O"), "2"),
        // The recognizer returns something that is not SMILES for this one.
        (1, bx(0.10, 0.60, 0.30, 0.75), Some("C1CC(N"), "4"),
        (2, bx(0.10, 0.05, 0.50, 0.25), Some("O=C(N[R1])c1ccc([R2])cc1"), "3"),
    ]
}

fn parsed() -> Value {
    json!({
        "doc_id": "kinase_series",
        "text_segments": [
            {"id": "p1-s1", "page": 1, "kind": "paragraph",
             "text": "Compound 1 inhibited EGFR with Ki = 12 nM and IC50 = 0.03 µM, while 2 gave Ki = 0.25 µM."},
            {"id": "p1-s2", "page": 1, "kind": "paragraph",
             "text": "Analogue 99 was weak against EGFR (IC50 > 10 µM) and 98 was inactive."},
            {"id": "p2-cap", "page": 2, "kind": "caption", "text": "Table 1. EGFR inhibition by 1, 2 and benzamides 3a-3e."},
            {"id": "p2-t1", "page": 2, "kind": "table_text",
             "text": "cpd | R1 | R2 | IC50\n1 | | | 30 nM\n2 | | | 0.12 µM\n3a | Me | H | 450 nM\n3b | Et | F | 1.2 µM\n3c | cPr | Cl | 85 nM\n3d | cyclobutyl | OMe | 9.5 nM\n3e | Xyz | H | n.d."},
            {"id": "p3-cap", "page": 3, "kind": "caption", "text": "Figure 2. Cellular EC50 of 3a-3d against EGFR."}
        ],
        "page_images": [
            {"page": 1, "image": "pages/1.png"},
            {"page": 2, "image": "pages/2.png"},
            {"page": 3, "image": "pages/3.png"}
        ],
        "regions": [
            {"id": "t1", "page": 2, "box": [0.05, 0.40, 0.95, 0.80], "kind": "table",
             "image": "regions/t1.png", "caption": "p2-cap"},
            {"id": "f2", "page": 3, "box": [0.05, 0.10, 0.95, 0.60], "kind": "figure",
             "image": "regions/f2.png", "caption": "p3-cap"}
        ]
    })
}

fn statement(ligand: &str, value: &str, assay: Option<&str>) -> Value {
    let mut v = json!({"protein": "EGFR", "ligand_coreference": ligand, "value_text": value});
    if let Some(a) = assay {
        v["assay_type"] = json!(a);
    }
    v
}

fn measurements(source: &str) -> Value {
    let items = match source {
        "p1-s1" => vec![
            statement("1", "Ki = 12 nM", None),
            statement("1", "IC50 = 0.03 µM", None),
            statement("2", "Ki = 0.25 µM", None),
        ],
        "p1-s2" => vec![statement("99", "IC50 > 10 µM", None), statement("98", "inactive", None)],
        "t1" => [("1", "30 nM"), ("2", "0.12 µM"), ("3a", "450 nM"), ("3b", "1.2 µM"), ("3c", "85 nM"), ("3d", "9.5 nM")]
            .iter()
            .map(|(l, v)| statement(l, v, Some("IC50")))
            .collect(),
        "f2" => [("3a", "2.1 µM"), ("3b", "5 µM"), ("3c", "0.8 µM"), ("3d", "150 nM")]
            .iter()
            .map(|(l, v)| statement(l, v, Some("EC50")))
            .collect(),
        _ => vec![],
    };
    json!({ "measurements": items })
}

fn markush_table() -> Value {
    let abbr = |s: &str| json!({"kind": "abbreviation", "value": s});
    json!({"table": {"rows": [
        {"coreference": "3a", "assignment": {"R1": abbr("Me"), "R2": {"kind": "hydrogen"}}},
        {"coreference": "3b", "assignment": {"R1": abbr("Et"), "R2": abbr("F")}},
        {"coreference": "3c", "assignment": {"R1": abbr("cPr"), "R2": abbr("Cl")}},
        {"coreference": "3d", "assignment": {"R1": {"kind": "iupac_name", "value": "cyclobutyl"}, "R2": abbr("OMe")}},
        {"coreference": "3e", "assignment": {"R1": abbr("Xyz"), "R2": {"kind": "hydrogen"}}}
    ]}})
}

fn boxed(v: &Value) -> Result<PageBox, BackendError> {
    serde_json::from_value(v.clone()).map_err(|e| BackendError::Malformed { backend: "script".into(), message: e.to_string() })
}

/// Plays every backend from the tables above.
struct Script;

impl Transport for Script {
    fn call(&self, request: &Envelope) -> Result<Value, BackendError> {
        let p = &request.payload;
        let find = |b: &PageBox| depictions().into_iter().find(|d| d.1 == *b);
        Ok(match request.backend.as_str() {
            "parser" => parsed(),
            "detector" => {
                let page = p["page"].as_u64().unwrap_or_default() as u32;
                let boxes: Vec<Value> =
                    depictions().iter().filter(|d| d.0 == page).map(|d| json!({"box": d.1, "score": 0.97})).collect();
                json!({ "detections": boxes })
            }
            "ocsr" => json!({ "smiles": find(&boxed(&p["box"])?).and_then(|d| d.2) }),
            "reasoner" => match p["task"].as_str() {
                Some("coreference") => {
                    let mut entries = Vec::new();
                    for o in p["overlays"].as_array().into_iter().flatten() {
                        if let Some(d) = find(&boxed(&o["box"])?) {
                            entries.push(json!({"label": o["label"], "coreference": d.3}));
                        }
                    }
                    json!({ "entries": entries })
                }
                Some("markush") => markush_table(),
                Some("measurements") => measurements(p["source"].as_str().unwrap_or_default()),
                _ => return Err(BackendError::Status { backend: request.backend.clone(), code: 400 }),
            },
            "name_to_structure" => match p["name"].as_str() {
                Some("cyclobutyl") => json!({"smiles": "*C1CCC1"}),
                _ => json!({"error": "unknown name"}),
            },
            _ => return Err(BackendError::Status { backend: request.backend.clone(), code: 404 }),
        })
    }
}

fn main() -> Result<()> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kinase_series");
    let cassette_dir = fixture.join("cassette");
    if cassette_dir.exists() {
        std::fs::remove_dir_all(&cassette_dir).context("clearing old cassette")?;
    }
    let cfg = PipelineConfig::load(&fixture.join("pipeline.toml"))?;
    let versions = cfg.backends.iter().map(|(k, v)| (k.clone(), v.version.clone())).collect();
    let cassette = Cassette::open(&cassette_dir, CassetteMode::Record, Some(Arc::new(Script)))?;
    let backends = bioextract_pipeline::Backends::new(Arc::new(cassette), versions, cfg.retry);
    let out = tempfile::tempdir()?;
    let opts = RunOptions::from_config(&cfg, out.path())?;
    let record = orchestrator::run_document(&DocumentInput::from_path(fixture.join("kinase_series.pdf")), &backends, &opts)?;
    println!("recorded {} triplets into {}", record.triplets.len(), cassette_dir.display());
    if record.triplets.is_empty() {
        bail!("fixture produced no triplets; stages: {:?}", record.stages);
    }
    Ok(())
}
