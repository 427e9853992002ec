//! Circular (ECFP-style) fingerprints and Tanimoto similarity.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::graph::MolecularGraph;
use super::ChemError;
use crate::scalar::Scalar;

/// What to do with attachment-point atoms when fingerprinting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceholderPolicy {
    /// Remove placeholder atoms and fingerprint the rest.
    #[default]
    Strip,
    /// Refuse to fingerprint a molecule that still has placeholders.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FingerprintParams {
    pub radius: u32,
    pub width: usize,
    pub placeholders: PlaceholderPolicy,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams { radius: 2, width: 2048, placeholders: PlaceholderPolicy::Strip }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(width: usize) -> Self {
        Fingerprint { width, words: vec![0; width.div_ceil(64)] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] & (1 << (bit % 64)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }

    /// |A ∩ B| / |A ∪ B|; two empty fingerprints are identical (1.0).
    pub fn tanimoto<T: Scalar>(&self, other: &Fingerprint) -> Result<T, ChemError> {
        if self.width != other.width {
            return Err(ChemError::FingerprintMismatch { left: self.width, right: other.width });
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as usize;
            union += (a | b).count_ones() as usize;
        }
        if union == 0 {
            return Ok(T::one());
        }
        Ok(T::ratio(inter, union))
    }
}

fn hash_bytes(parts: &[u64]) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(&p.to_le_bytes());
    }
    h.finish()
}

/// Computes a folded circular fingerprint.
pub fn circular_fingerprint(g: &MolecularGraph, params: &FingerprintParams) -> Result<Fingerprint, ChemError> {
    if params.width == 0 {
        return Err(ChemError::FingerprintMismatch { left: 0, right: 0 });
    }
    let has_placeholder = g.atoms.iter().any(|a| a.element.is_placeholder());
    let stripped;
    let g = if has_placeholder {
        match params.placeholders {
            PlaceholderPolicy::Reject => return Err(ChemError::AttachmentPointPresent),
            PlaceholderPolicy::Strip => {
                stripped = g.strip_placeholders();
                &stripped
            }
        }
    } else {
        g
    };
    let ring = g.ring_atoms();
    let adj = g.adjacency();
    let mut ids: Vec<u64> = (0..g.atoms.len())
        .map(|i| {
            let a = &g.atoms[i];
            hash_bytes(&[
                a.element.atomic_number() as u64,
                a.formal_charge as i64 as u64,
                adj[i].len() as u64,
                a.hydrogens as u64,
                a.isotope.unwrap_or(0) as u64,
                a.aromatic as u64,
                ring[i] as u64,
            ])
        })
        .collect();
    let mut fp = Fingerprint::empty(params.width);
    let fold = |fp: &mut Fingerprint, id: u64| fp.set((id % params.width as u64) as usize);
    for &id in &ids {
        fold(&mut fp, id);
    }
    for round in 1..=params.radius {
        let next: Vec<u64> = (0..g.atoms.len())
            .map(|i| {
                let mut env: Vec<(u64, u64)> =
                    adj[i].iter().map(|&(j, b)| (g.bonds[b].order.code() as u64, ids[j])).collect();
                env.sort_unstable();
                let mut parts = vec![round as u64, ids[i]];
                for (code, id) in env {
                    parts.push(code);
                    parts.push(id);
                }
                hash_bytes(&parts)
            })
            .collect();
        ids = next;
        for &id in &ids {
            fold(&mut fp, id);
        }
    }
    Ok(fp)
}

/// Tanimoto similarity of two molecules under the given parameters.
pub fn tanimoto<T: Scalar>(a: &MolecularGraph, b: &MolecularGraph, params: &FingerprintParams) -> Result<T, ChemError> {
    circular_fingerprint(a, params)?.tanimoto(&circular_fingerprint(b, params)?)
}
