//! Regenerates the bundled synthetic molecule and footprinting profile.
//!
//! The profile seed is the first one, counting from 1, whose lag-1
//! autocorrelation is within 0.02 of 0.47 and whose fitted decay rate over
//! lags 1..100 is within 0.02 of 0.40.
//!
//! cargo run -p spkg-core --example gen_synthetic -- crates/core/data

use std::path::PathBuf;

use spkg_core::prior::{fit_decay_rate, write_footprinting};
use spkg_core::sim::synthetic::{
    synthetic_molecule, synthetic_profile, ProfileParams, SYNTHETIC_MOLECULE_LEN, SYNTHETIC_MOLECULE_SEED,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/data".into()));
    let molecule = synthetic_molecule(SYNTHETIC_MOLECULE_LEN, SYNTHETIC_MOLECULE_SEED)?;
    std::fs::write(dir.join("synthetic_target.fasta"), molecule.to_fasta())?;

    let params = ProfileParams::default();
    for seed in 1..100_000u64 {
        let profile = synthetic_profile(&params, seed)?;
        let (kappa, acf) = fit_decay_rate(&profile, 100)?;
        if (acf[1] - 0.47).abs() < 0.02 && (kappa - 0.40).abs() < 0.02 {
            write_footprinting(&dir.join("synthetic_dms.csv"), &profile)?;
            println!("seed {seed}: lag-1 {:.4}, kappa {:.5}", acf[1], kappa);
            return Ok(());
        }
    }
    Err("no seed matched".into())
}
