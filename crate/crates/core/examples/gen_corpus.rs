//! Regenerates `data/corpus.smi`, the molecule corpus used by the round-trip
//! tests. Run with `cargo run -p bioextract-core --example gen_corpus`.

use bioextract_core::chem::parse_smiles;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const LINKERS: &[&str] = &[
    "C", "CC", "O", "N", "C(=O)", "C(=O)N", "NC(=O)", "S(=O)(=O)", "OC", "C(F)(F)", "[C@H](N)", "[C@@H](O)", "[C@H](C)",
    "[C@@H](CC)", "[13CH2]", "[2H]C", "C=C", "N(C)",
];
const RINGS: &[&str] = &[
    "c1ccccc1", "c1ccncc1", "c1ccsc1", "c1cc[nH]c1", "c1ccoc1", "c1ccc2ccccc2c1", "c1ccc2[nH]ccc2c1", "C1CCCCC1",
    "C1CCNCC1", "C1CCOC1", "C1=CC=CC=C1", "c1cnc2ccccc2n1", "c1ncncc1", "C1CC1", "c1ccc(F)cc1",
];
const CAPS: &[&str] = &["C", "F", "Cl", "Br", "O", "N", "C#N", "[N+](=O)[O-]", "C(F)(F)F", "OC", "C(=O)O", "[O-]"];

fn unit(rng: &mut StdRng, out: &mut String) {
    if rng.gen_bool(0.45) {
        out.push_str(RINGS.choose(rng).unwrap());
    } else {
        out.push_str(LINKERS.choose(rng).unwrap());
    }
}

fn molecule(rng: &mut StdRng) -> String {
    let mut s = String::new();
    s.push_str(CAPS.choose(rng).unwrap());
    let n = rng.gen_range(1..=5);
    for i in 0..n {
        if rng.gen_bool(0.12) && i > 0 {
            // a cis/trans double bond between two carbons
            s.push_str(if rng.gen_bool(0.5) { "/C=C/" } else { "/C=C\\" });
            s.push('C');
        }
        unit(rng, &mut s);
        if rng.gen_bool(0.15) {
            s.push_str("C(");
            s.push_str(CAPS.choose(rng).unwrap());
            s.push(')');
        }
    }
    if rng.gen_bool(0.7) {
        s.push_str(CAPS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.05) {
        s.push_str(".[Na+]");
    }
    s
}

fn main() {
    let mut rng = StdRng::seed_from_u64(20240611);
    let mut out = String::from("# generated by examples/gen_corpus.rs; one SMILES per line\n");
    let mut seen = std::collections::HashSet::new();
    let mut count = 0;
    while count < 1000 {
        let s = molecule(&mut rng);
        if parse_smiles(&s).is_ok() && seen.insert(s.clone()) {
            out.push_str(&s);
            out.push('\n');
            count += 1;
        }
    }
    std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/data/corpus.smi"), out).unwrap();
}
