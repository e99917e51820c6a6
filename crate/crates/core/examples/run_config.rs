//! Runs an experiment config and prints the summary JSON.
//!
//! cargo run --release -p spkg-core --example run_config -- configs/sequential.json [out_dir]

use std::path::PathBuf;

use spkg_core::sim::{export_results, prepare, run_replications, ExperimentConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(std::env::args().nth(1).ok_or("missing config path")?);
    let out = PathBuf::from(std::env::args().nth(2).unwrap_or_else(|| "out".into()));
    let cfg = ExperimentConfig::read(&path)?;
    let setup = prepare(&cfg, path.parent().unwrap_or(&PathBuf::from(".")))?;
    let start = std::time::Instant::now();
    let results = run_replications(
        &setup,
        RunOptions {
            trials: cfg.trials,
            seed: cfg.seed,
        },
    )?;
    let summary = export_results(&results, &out)?;
    eprintln!(
        "M = {}, p = {}, {:.1}s",
        setup.library.len(),
        setup.molecule.len(),
        start.elapsed().as_secs_f64()
    );
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
