//! Expanding a probe library with shifted variants of its probes.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::basis::{basis_row, BasisMatrix, EnergyTable};
use super::molecule::TargetMolecule;
use super::probe::{Probe, MIN_PROBE_LEN};
use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::kg::KGScores;

/// Largest shift applied to either end of a probe.
pub const MAX_SHIFT: usize = 7;

/// Neighbors of a probe on a molecule with positions `1..=p`.
pub fn mutagenesis_neighbors(probe: &Probe, p: usize) -> Vec<Probe> {
    mutagenesis_neighbors_within(probe, 1, p)
}

/// Probes obtained by moving one end of `probe` by `1..=7` positions in
/// either direction, staying inside `[lo, hi]` and at least 4 long. Sorted,
/// without duplicates, never containing `probe` itself.
pub fn mutagenesis_neighbors_within(probe: &Probe, lo: usize, hi: usize) -> Vec<Probe> {
    let mut out = BTreeSet::new();
    let (i, j) = (probe.start as i64, probe.end as i64);
    let (lo, hi) = (lo as i64, hi as i64);
    let min_len = MIN_PROBE_LEN as i64;
    for k in 1..=MAX_SHIFT as i64 {
        for d in [-k, k] {
            for (s, e) in [(i + d, j), (i, j + d)] {
                if s >= lo.max(1) && e <= hi && e - s + 1 >= min_len {
                    out.insert(Probe {
                        start: s as usize,
                        end: e as usize,
                    });
                }
            }
        }
    }
    out.remove(probe);
    out.into_iter().collect()
}

/// What is needed to build basis rows for probes outside the library.
#[derive(Clone, Copy, Debug)]
pub struct ExpansionContext<'a> {
    pub molecule: &'a TargetMolecule,
    pub table: &'a EnergyTable,
    /// Measurement noise assigned to newly created alternatives.
    pub noise_sd: f64,
}

/// The library followed by every new neighbor, with matching basis rows.
#[derive(Clone, Debug)]
pub struct ExpandedCandidates {
    pub probes: Vec<Probe>,
    pub basis: BasisMatrix,
    pub noise_sds: Vec<f64>,
    /// Number of leading entries that are already in the library.
    pub existing: usize,
}

pub fn expanded_candidates(
    library: &[Probe],
    belief: &BeliefState,
    ctx: ExpansionContext<'_>,
) -> Result<ExpandedCandidates> {
    let m = library.len();
    if m == 0 {
        return Err(Error::invalid("library", "probe library is empty"));
    }
    if belief.num_alternatives() != m {
        return Err(Error::dim("library vs basis rows", belief.num_alternatives(), m));
    }
    let p = belief.num_coefficients();
    if ctx.molecule.len() != p {
        return Err(Error::dim("molecule length", p, ctx.molecule.len()));
    }
    if !(ctx.noise_sd.is_finite() && ctx.noise_sd > 0.0) {
        return Err(Error::invalid("noise_sd", "measurement noise must be positive"));
    }
    let known: BTreeSet<Probe> = library.iter().copied().collect();
    let (lo, hi) = (ctx.molecule.first_position(), ctx.molecule.last_position());
    let mut fresh = BTreeSet::new();
    for probe in library {
        for n in mutagenesis_neighbors_within(probe, lo, hi) {
            if !known.contains(&n) {
                fresh.insert(n);
            }
        }
    }

    let total = m + fresh.len();
    let mut rows = DMatrix::zeros(total, p);
    rows.rows_mut(0, m).copy_from(&belief.basis.rows);
    let mut intercepts = belief.basis.intercepts.clone().resize_vertically(total, 0.0);
    let mut probes = library.to_vec();
    let mut noise_sds = belief.noise_sd.clone();
    for (k, probe) in fresh.into_iter().enumerate() {
        let row = basis_row(ctx.molecule, &probe, ctx.table)?;
        rows.row_mut(m + k).copy_from(&row.transpose());
        intercepts[m + k] = 0.0;
        probes.push(probe);
        noise_sds.push(ctx.noise_sd);
    }
    Ok(ExpandedCandidates {
        probes,
        basis: BasisMatrix::with_intercepts(rows, intercepts)?,
        noise_sds,
        existing: m,
    })
}

/// Result of one library expansion.
#[derive(Clone, Debug)]
pub struct ExpansionPick {
    pub probe: Probe,
    /// Index of `probe` among the expanded candidates.
    pub index: usize,
    /// Whether `probe` was not in the library before.
    pub added: bool,
    pub library: Vec<Probe>,
    pub scores: KGScores,
}

/// Scores the library plus all its neighbors with `scorer` and returns the
/// best probe, appending it to the library when it is new.
pub fn expand_library<F>(
    library: &[Probe],
    belief: &BeliefState,
    ctx: ExpansionContext<'_>,
    scorer: F,
) -> Result<ExpansionPick>
where
    F: FnOnce(&BeliefState) -> Result<KGScores>,
{
    let cand = expanded_candidates(library, belief, ctx)?;
    let view = belief.with_basis(Arc::new(cand.basis), cand.noise_sds)?;
    let scores = scorer(&view)?;
    let index = scores.argmax;
    let probe = cand.probes[index];
    let added = index >= cand.existing;
    let mut library = library.to_vec();
    if added {
        library.push(probe);
    }
    Ok(ExpansionPick {
        probe,
        index,
        added,
        library,
        scores,
    })
}
