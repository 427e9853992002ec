mod common;

use std::collections::BTreeMap;

use bioextract_core::join::{join, normalize_coreference, StructureOrigin, StructureRecord, FLAG_AMBIGUOUS};
use bioextract_core::measure::{normalize, AssayType, Measurement, Modality, Relation, Unit};
use common::dec;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const KEYS: &[&str] = &["1", "2", "12a", "AZD-1234", "7", "", "3b"];
const SMILES: &[&str] = &["CCO", "CCN", "c1ccccc1", "CC(=O)O", "C1CCCCC1"];

fn decorate(rng: &mut StdRng, key: &str) -> String {
    match rng.gen_range(0..4) {
        0 => key.to_string(),
        1 => format!("Compound {key}"),
        2 => format!("<b>{key}</b>"),
        _ => format!("{key}."),
    }
}

#[test]
fn join_conserves_both_sides() {
    for trial in 0..1000u64 {
        let mut rng = StdRng::seed_from_u64(trial);
        let measurements: Vec<_> = (0..rng.gen_range(0..10))
            .map(|i| {
                let raw = *KEYS.choose(&mut rng).unwrap();
                let key = decorate(&mut rng, raw);
                normalize(&Measurement {
                    protein: "P".into(),
                    ligand_coreference: key,
                    assay_type: AssayType::Ki,
                    relation: Relation::Eq,
                    value: dec(&format!("{}", i + 1)),
                    unit: Unit::NanoMolar,
                    modality: Modality::Text,
                    provenance: vec![],
                    uncertainty: None,
                    range: None,
                })
                .unwrap()
            })
            .collect();
        let structures: Vec<_> = (0..rng.gen_range(0..8))
            .map(|i| {
                let raw = *KEYS.choose(&mut rng).unwrap();
                StructureRecord {
                    coreference: decorate(&mut rng, raw),
                    smiles: SMILES.choose(&mut rng).unwrap().to_string(),
                    origin: StructureOrigin::Explicit,
                    provenance: vec![i],
                }
            })
            .collect();
        let out = join(&measurements, &structures);

        // independent tally: per key, how many structures carry it
        let mut carriers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, s) in structures.iter().enumerate() {
            carriers.entry(normalize_coreference(&s.coreference)).or_default().push(i);
        }
        let mut expected_triplets = 0;
        for (i, m) in measurements.iter().enumerate() {
            let key = normalize_coreference(&m.base.ligand_coreference);
            let hits = if key.is_empty() { 0 } else { carriers.get(&key).map_or(0, Vec::len) };
            let joined = out.triplets.iter().filter(|t| t.provenance.measurement == i).count();
            let unmatched = out.unmatched_measurements.contains(&i);
            assert_eq!(joined, hits, "trial {trial} measurement {i}");
            assert!(unmatched == (hits == 0), "measurement {i} in exactly one bucket (trial {trial})");
            expected_triplets += hits;
        }
        assert_eq!(out.triplets.len(), expected_triplets);
        for (j, _) in structures.iter().enumerate() {
            let joined = out.triplets.iter().any(|t| t.provenance.structure == j);
            assert!(joined != out.unmatched_structures.contains(&j), "structure {j} in exactly one bucket (trial {trial})");
        }
        let joined_measurements: std::collections::BTreeSet<_> = out.triplets.iter().map(|t| t.provenance.measurement).collect();
        assert_eq!(joined_measurements.len() + out.unmatched_measurements.len(), measurements.len());
        for t in &out.triplets {
            let m = &measurements[t.provenance.measurement];
            let s = &structures[t.provenance.structure];
            assert_eq!(t.join_key, normalize_coreference(&m.base.ligand_coreference));
            assert_eq!(t.join_key, normalize_coreference(&s.coreference));
            assert_eq!(t.smiles, s.smiles);
            assert_eq!(t.flags.contains(&FLAG_AMBIGUOUS.to_string()), carriers[&t.join_key].len() > 1);
        }
    }
}
