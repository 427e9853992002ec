use std::collections::{BTreeMap, BTreeSet};

use bioextract_core::chem::{canonicalize_smiles, has_substructure, parse_smiles, to_canonical_smiles};
use bioextract_core::markush::{
    enumerate_rows, zip, AbbreviationTable, FailureCause, Fragment, MarkushScaffold, NameToStructure, RGroupRow,
    RGroupTable, Substituent,
};
use bioextract_core::record::Detection;
use serde_json::Value;

struct Names;

impl NameToStructure for Names {
    fn name_to_smiles(&self, name: &str) -> Result<String, String> {
        match name {
            "cyclobutyl" => Ok("*C1CCC1".into()),
            _ => Err(format!("cannot parse name {name}")),
        }
    }
}

fn abbr(s: &str) -> Substituent {
    if s == "H" {
        Substituent::Hydrogen
    } else {
        Substituent::Abbreviation(s.into())
    }
}

fn canon(s: &str) -> String {
    canonicalize_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

/// The two-label benzamide table; each row carries its hand-drawn product.
struct Benzamide {
    scaffold: MarkushScaffold,
    scaffold_detection: usize,
    detections: Vec<Detection>,
    table: RGroupTable,
    expected: Vec<String>,
}

fn benzamide() -> Benzamide {
    let v: Value = serde_json::from_str(include_str!("data/markush/benzamide_table.json")).unwrap();
    let rows = v["rows"].as_array().unwrap();
    Benzamide {
        scaffold: MarkushScaffold::from_smiles(v["scaffold"].as_str().unwrap()).unwrap(),
        scaffold_detection: v["scaffold_detection"].as_u64().unwrap() as usize,
        detections: serde_json::from_value(v["detections"].clone()).unwrap(),
        table: RGroupTable {
            rows: rows
                .iter()
                .map(|r| RGroupRow {
                    coreference: r["coreference"].as_str().unwrap().into(),
                    assignment: serde_json::from_value(r["assignment"].clone()).unwrap(),
                })
                .collect(),
            hydrogen_default: BTreeSet::new(),
        },
        expected: rows.iter().map(|r| r["expected"].as_str().unwrap().to_string()).collect(),
    }
}

#[test]
fn twenty_row_table_matches_hand_drawn_products() {
    let b = benzamide();
    let enumerate = || {
        enumerate_rows(&b.scaffold, b.scaffold_detection, &b.table, &AbbreviationTable::builtin(), Some(&Names), &b.detections)
    };
    let out = enumerate();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.records.len(), 20);
    for (rec, expected) in out.records.iter().zip(&b.expected) {
        assert_eq!(rec.smiles, canon(expected), "row {}", rec.coreference);
        let product = parse_smiles(&rec.smiles).unwrap();
        assert!(has_substructure(&product, &b.scaffold.graph.strip_placeholders()), "row {}", rec.coreference);
    }
    // enumeration is deterministic
    assert_eq!(enumerate(), out);
}

#[test]
fn single_label_fixtures() {
    let cases: &[(&str, &[(&str, Option<&str>)], &str)] = &[
        ("c1ccc(cc1)[R1]", &[("R1", Some("*C"))], "Cc1ccccc1"),
        ("c1ccc(cc1)[R1]", &[("R1", None)], "c1ccccc1"),
        ("[R1]CC[R2]", &[("R1", Some("*O")), ("R2", Some("*N"))], "OCCN"),
        ("[R1]c1ccncc1", &[("R1", Some("*c1ccccc1"))], "c1ccc(-c2ccncc2)cc1"),
        ("O=C([R1])N", &[("R1", Some("*C(F)(F)F"))], "NC(=O)C(F)(F)F"),
    ];
    for (scaffold, parts, expected) in cases {
        let s = MarkushScaffold::from_smiles(scaffold).unwrap();
        let a: BTreeMap<String, Fragment> = parts
            .iter()
            .map(|(l, f)| (l.to_string(), f.map(|f| Fragment::from_smiles(f).unwrap()).unwrap_or(Fragment::Hydrogen)))
            .collect();
        assert_eq!(to_canonical_smiles(&zip(&s, &a).unwrap()), canon(expected), "{scaffold}");
    }
}

#[test]
fn failures_are_routed_not_dropped() {
    let scaffold = MarkushScaffold::from_smiles("O=C(N[R1])c1ccc([R2])cc1").unwrap();
    let row = |c: &str, r1: Substituent, r2: Substituent| RGroupRow {
        coreference: c.into(),
        assignment: [("R1".to_string(), r1), ("R2".to_string(), r2)].into(),
    };
    let table = RGroupTable {
        rows: vec![
            row("1", abbr("Me"), abbr("H")),
            row("2", abbr("Qq"), abbr("H")),
            row("3", Substituent::VisualIndex(99), abbr("H")),
            row("4", Substituent::IupacName("unobtainium".into()), abbr("H")),
            row("5", Substituent::FragmentSmiles("CC".into()), abbr("H")),
        ],
        hydrogen_default: BTreeSet::new(),
    };
    let out = enumerate_rows(&scaffold, 0, &table, &AbbreviationTable::builtin(), Some(&Names), &[]);
    assert_eq!(out.records.len() + out.failures.len(), 5);
    let causes: Vec<FailureCause> = out.failures.iter().map(|f| f.cause).collect();
    assert_eq!(
        causes,
        vec![
            FailureCause::UnknownAbbreviation,
            FailureCause::VisualIndexMissing,
            FailureCause::NameResolution,
            FailureCause::AttachmentCount
        ]
    );
}
