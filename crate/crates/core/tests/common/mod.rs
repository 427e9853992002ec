#![allow(dead_code)]

use std::str::FromStr;

use bioextract_core::join::{BioactivityTriplet, TripletProvenance};
use bioextract_core::measure::{p_value, AssayType, Relation, Unit};
use bioextract_core::record::{ExtractionRecord, Stage, StageStatus};
use rust_decimal::Decimal;

pub fn dec(s: &str) -> Decimal {
    Decimal::from_str(s).unwrap()
}

pub fn triplet(protein: &str, smiles: &str, assay: AssayType, nm: &str) -> BioactivityTriplet {
    BioactivityTriplet {
        protein: protein.into(),
        smiles: smiles.into(),
        assay_type: assay,
        relation: Relation::Eq,
        value: dec(nm),
        unit: Unit::NanoMolar,
        value_nm: Some(dec(nm)),
        p_value: p_value(dec(nm)),
        join_key: String::new(),
        provenance: TripletProvenance { structure: 0, measurement: 0 },
        flags: vec![],
    }
}

/// A record whose every stage has finished.
pub fn finished_record(doc: &str) -> ExtractionRecord {
    let mut r = ExtractionRecord::new(doc, "digest");
    for s in Stage::ALL {
        assert!(r.set_status(s, StageStatus::Running, None));
        assert!(r.set_status(s, StageStatus::Done, None));
    }
    r
}
