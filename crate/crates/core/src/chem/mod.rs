//! Molecular graphs, SMILES reading and writing, canonical forms and
//! similarity.

mod aromatic;
pub mod canon;
pub mod element;
pub mod fingerprint;
pub mod graph;
pub mod smiles;
pub mod substructure;
mod writer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canon::{canonical_ranks, CanonInfo};
pub use element::Element;
pub use fingerprint::{circular_fingerprint, tanimoto, Fingerprint, FingerprintParams, PlaceholderPolicy};
pub use graph::{Atom, AttachmentPoint, Bond, BondOrder, BondStereo, Chirality, DoubleBondConfig, MolecularGraph, Slot};
pub use smiles::parse_smiles;
pub use substructure::{find_substructure, has_substructure};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("SMILES syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("ring bond {digit} opened at {pos} is never closed")]
    UnclosedRing { digit: u32, pos: usize },
    #[error("unknown element '{symbol}' at {pos}")]
    UnknownElement { pos: usize, symbol: String },
    #[error("atom {atom} ({element}) has valence {valence}, maximum is {max}")]
    Valence { atom: usize, element: String, valence: u8, max: u8 },
    #[error("aromatic system cannot be kekulized around atoms {0:?}")]
    Kekulize(Vec<usize>),
    #[error("invalid bond: {0}")]
    InvalidBond(String),
    #[error("invalid attachment point: {0}")]
    Placeholder(String),
    #[error("attachment point {label} must have exactly one neighbour, found {degree}")]
    PlaceholderDegree { label: String, degree: usize },
    #[error("attachment label {0} is used more than once")]
    DuplicateLabel(String),
    #[error("unsupported SMILES feature at {pos}: {feature}")]
    Unsupported { pos: usize, feature: String },
    #[error("empty SMILES")]
    Empty,
    #[error("molecule still has attachment points")]
    AttachmentPointPresent,
    #[error("fingerprint widths differ ({left} vs {right})")]
    FingerprintMismatch { left: usize, right: usize },
}

/// Whether comparisons look at tetrahedral and cis/trans configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StereoMode {
    #[default]
    Sensitive,
    Insensitive,
}

/// Canonical SMILES for a graph.
pub fn to_canonical_smiles(g: &MolecularGraph) -> String {
    writer::write_with(g, &canonical_ranks(g))
}

/// SMILES that starts from and prefers atoms with low `priority`. The output
/// describes the same molecule but is not canonical.
pub fn to_smiles_in_order(g: &MolecularGraph, priority: &[usize]) -> String {
    assert_eq!(priority.len(), g.atoms.len(), "one priority per atom");
    writer::write_in_order(g, priority)
}

/// Parses and re-writes a SMILES string in canonical form.
pub fn canonicalize_smiles(text: &str) -> Result<String, ChemError> {
    Ok(to_canonical_smiles(&parse_smiles(text)?))
}

/// Canonical SMILES with stereo tags removed.
pub fn canonical_without_stereo(g: &MolecularGraph) -> String {
    to_canonical_smiles(&g.without_stereo())
}

pub fn canonical_for(g: &MolecularGraph, mode: StereoMode) -> String {
    match mode {
        StereoMode::Sensitive => to_canonical_smiles(g),
        StereoMode::Insensitive => canonical_without_stereo(g),
    }
}

/// Structural identity of two molecules.
pub fn molecules_equal(a: &MolecularGraph, b: &MolecularGraph, mode: StereoMode) -> bool {
    a.atoms.len() == b.atoms.len() && a.bonds.len() == b.bonds.len() && canonical_for(a, mode) == canonical_for(b, mode)
}

/// Compares two SMILES strings; unparsable input never matches.
pub fn smiles_equal(a: &str, b: &str, mode: StereoMode) -> bool {
    match (parse_smiles(a), parse_smiles(b)) {
        (Ok(x), Ok(y)) => molecules_equal(&x, &y, mode),
        _ => false,
    }
}

/// Lines of a newline-delimited SMILES file, skipping blanks and `#` comments.
/// Anything after the first whitespace on a line (a name column) is ignored.
pub fn read_smiles_lines(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().next())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon(s: &str) -> String {
        canonicalize_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn writing_orders_agree() {
        let groups = [
            vec!["OCC", "CCO", "C(O)C"],
            vec!["c1ccccc1O", "Oc1ccccc1", "C1=CC=CC=C1O", "OC1=CC=CC=C1"],
            vec!["CC(=O)Oc1ccccc1C(=O)O", "OC(=O)c1ccccc1OC(C)=O"],
            vec!["c1ccc2ccccc2c1", "C1=CC2=CC=CC=C2C=C1"],
            vec!["c1cc[nH]c1", "N1C=CC=C1"],
            vec!["F/C=C/F", "F\\C=C\\F", "C(\\F)=C/F"],
            vec!["N[C@@H](C)C(=O)O", "C[C@H](N)C(=O)O", "OC(=O)[C@@H](N)C"],
        ];
        for group in groups {
            let first = canon(group[0]);
            for s in &group[1..] {
                assert_eq!(canon(s), first, "{s} vs {}", group[0]);
            }
        }
    }

    #[test]
    fn stereoisomers_differ() {
        assert_ne!(canon("F/C=C/F"), canon("F/C=C\\F"));
        assert_ne!(canon("N[C@@H](C)C(=O)O"), canon("N[C@H](C)C(=O)O"));
        assert!(smiles_equal("N[C@@H](C)C(=O)O", "N[C@H](C)C(=O)O", StereoMode::Insensitive));
    }

    #[test]
    fn canonical_output_is_a_fixed_point() {
        for s in [
            "CC(=O)Oc1ccccc1C(=O)O",
            "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
            "[13CH3]C(=O)[O-].[Na+]",
            "C1CC2CCC1CC2",
            "O=C(N[*:1])c1ccc([*:2])cc1",
            "C/C=C/C=C/C",
            "c1ccc(-c2ccccc2)cc1",
            "O=c1cccc[nH]1",
        ] {
            let c = canon(s);
            assert_eq!(canon(&c), c, "{s}");
        }
    }

    #[test]
    fn non_stereogenic_tags_are_dropped() {
        assert_eq!(canon("C[C@H](C)O"), canon("CC(C)O"));
    }
}
