//! Synthetic stand-ins for a target molecule and its footprinting profile.
//!
//! The bundled files under `data/` are produced by these generators (see
//! `examples/gen_synthetic.rs`); they are synthetic, not measured data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::prior::{parse_footprinting, FootprintingProfile};
use crate::rna::{Nucleotide, TargetMolecule};

pub const SYNTHETIC_MOLECULE_LEN: usize = 414;
/// Positions of the molecule covered by the profile.
pub const SYNTHETIC_USABLE_RANGE: (usize, usize) = (11, 403);
pub const SYNTHETIC_MOLECULE_SEED: u64 = 20_140_101;

const BUNDLED_FASTA: &str = include_str!("../../data/synthetic_target.fasta");
const BUNDLED_PROFILE: &str = include_str!("../../data/synthetic_dms.csv");

/// Parameters of the profile generator: a stationary AR(1) path plus
/// independent noise, shifted and clipped at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams {
    pub length: usize,
    pub rho: f64,
    pub nugget: f64,
    pub threshold: f64,
    pub scale: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            length: SYNTHETIC_USABLE_RANGE.1 - SYNTHETIC_USABLE_RANGE.0 + 1,
            rho: 0.85,
            nugget: 0.7,
            threshold: 0.0,
            scale: 1.5,
        }
    }
}

pub fn synthetic_molecule(length: usize, seed: u64) -> Result<TargetMolecule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = (0..length).map(|_| Nucleotide::ALL[rng.random_range(0..4)]).collect();
    TargetMolecule::new("synthetic-target", seq)
}

pub fn synthetic_profile(params: &ProfileParams, seed: u64) -> Result<FootprintingProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innov = (1.0 - params.rho * params.rho).sqrt();
    let mut x = 0.0;
    let mut values = Vec::with_capacity(params.length);
    for i in 0..params.length {
        let z: f64 = rng.sample(StandardNormal);
        x = if i == 0 { z } else { params.rho * x + innov * z };
        let e: f64 = rng.sample(StandardNormal);
        let v = (x + params.nugget * e - params.threshold).max(0.0) * params.scale;
        // Three decimals, like a reactivity table.
        values.push((v * 1000.0).round() / 1000.0);
    }
    FootprintingProfile::new(values, format!("synthetic (seed {seed})"))
}

/// The bundled synthetic molecule restricted to the profiled positions, and
/// the matching profile.
pub fn bundled_target() -> Result<(TargetMolecule, FootprintingProfile)> {
    let molecule = TargetMolecule::parse_fasta(BUNDLED_FASTA)?;
    let (lo, hi) = SYNTHETIC_USABLE_RANGE;
    let window = molecule.window(lo, hi)?;
    let mut profile = parse_footprinting(BUNDLED_PROFILE, "bundled synthetic profile")?.profile;
    profile.source = "bundled synthetic profile".into();
    Ok((window, profile))
}

pub fn bundled_fasta() -> &'static str {
    BUNDLED_FASTA
}

pub fn bundled_profile_csv() -> &'static str {
    BUNDLED_PROFILE
}
