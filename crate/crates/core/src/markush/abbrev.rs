use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Fragment, MarkushError};

const BUILTIN: &str = include_str!("../../data/abbreviations.tsv");

/// Curated mapping from substituent abbreviations to fragment SMILES.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbbreviationTable {
    entries: BTreeMap<String, String>,
}

impl AbbreviationTable {
    /// Parses the two-column tab-separated format. Lines starting with `#` are
    /// comments. Every fragment must carry exactly one attachment point.
    pub fn from_tsv(text: &str) -> Result<Self, MarkushError> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = n + 1;
            let (key, smiles) = line.split_once('\t').ok_or_else(|| MarkushError::Table {
                line: line_no,
                reason: "expected two tab-separated columns".into(),
            })?;
            let (key, smiles) = (key.trim(), smiles.trim());
            Fragment::from_smiles(smiles).map_err(|e| MarkushError::Table { line: line_no, reason: e.to_string() })?;
            if entries.insert(key.to_string(), smiles.to_string()).is_some() {
                return Err(MarkushError::Table { line: line_no, reason: format!("duplicate abbreviation {key}") });
            }
        }
        Ok(AbbreviationTable { entries })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN).expect("bundled abbreviation table is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: &str, smiles: &str) -> Result<(), MarkushError> {
        Fragment::from_smiles(smiles)?;
        self.entries.insert(key.to_string(), smiles.to_string());
        Ok(())
    }

    /// Exact lookup, falling back to a case-insensitive match when exactly one
    /// distinct fragment matches.
    pub fn lookup(&self, key: &str) -> Option<&str> {
        if let Some(s) = self.entries.get(key) {
            return Some(s);
        }
        let lower = key.to_lowercase();
        let mut hits = self.entries.iter().filter(|(k, _)| k.to_lowercase() == lower).map(|(_, v)| v.as_str());
        let first = hits.next()?;
        if hits.all(|v| v == first) {
            Some(first)
        } else {
            None
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
