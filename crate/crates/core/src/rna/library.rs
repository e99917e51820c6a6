use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::molecule::TargetMolecule;
use super::probe::Probe;
use crate::error::{Error, Result};

/// Hand-designed probes included in the batch setup.
pub const EXPERT_PROBES: [(usize, usize); 10] = [
    (98, 112),
    (113, 126),
    (127, 140),
    (141, 155),
    (156, 170),
    (171, 179),
    (179, 194),
    (195, 214),
    (215, 233),
    (234, 251),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibrarySpec {
    /// All windows of `length` nucleotides with `overlap` shared between
    /// neighbors, tiling the molecule from its first position.
    Uniform { length: usize, overlap: usize },
    /// Tilings of 8-mers shifted by 4, 12-mers shifted by 6 and 16-mers
    /// shifted by 8 over `[start, end]`, plus the expert probes lying inside it.
    MixedTiling { start: usize, end: usize },
    /// Explicit list.
    Probes(Vec<Probe>),
}

fn tile(lo: usize, hi: usize, length: usize, stride: usize, out: &mut BTreeSet<Probe>) -> Result<()> {
    let mut s = lo;
    while s + length - 1 <= hi {
        out.insert(Probe::new(s, s + length - 1)?);
        s += stride;
    }
    Ok(())
}

/// Generates a probe library sorted by start then end, without duplicates.
pub fn generate_probe_library(molecule: &TargetMolecule, spec: &LibrarySpec) -> Result<Vec<Probe>> {
    let lo = molecule.first_position();
    let hi = molecule.last_position();
    let mut set = BTreeSet::new();
    match spec {
        LibrarySpec::Uniform { length, overlap } => {
            if *length < super::probe::MIN_PROBE_LEN {
                return Err(Error::invalid("length", "probe length must be at least 4"));
            }
            if overlap >= length {
                return Err(Error::invalid(
                    "overlap",
                    "overlap must be smaller than the probe length",
                ));
            }
            tile(lo, hi, *length, length - overlap, &mut set)?;
        }
        LibrarySpec::MixedTiling { start, end } => {
            if *start < lo || *end > hi || start >= end {
                return Err(Error::invalid(
                    "range",
                    format!("[{start}, {end}] must lie inside [{lo}, {hi}]"),
                ));
            }
            for (length, stride) in [(8, 4), (12, 6), (16, 8)] {
                tile(*start, *end, length, stride, &mut set)?;
            }
            for (s, e) in EXPERT_PROBES {
                if s >= *start && e <= *end {
                    set.insert(Probe::new(s, e)?);
                }
            }
        }
        LibrarySpec::Probes(list) => {
            for p in list {
                if !p.within(lo, hi) {
                    return Err(Error::InvalidProbe {
                        start: p.start,
                        end: p.end,
                        reason: format!("outside molecule positions [{lo}, {hi}]"),
                    });
                }
                set.insert(*p);
            }
        }
    }
    if set.is_empty() {
        return Err(Error::invalid(
            "library",
            "specification produces an empty probe library",
        ));
    }
    Ok(set.into_iter().collect())
}
