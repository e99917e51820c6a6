//! Fraction of measured probes whose score falls on the next sweep.
//!
//! cargo run --release -p spkg-core --example score_drops -- configs/score_drops.json

use std::path::PathBuf;

use spkg_core::sim::{prepare, run_replications, score_drops, ExperimentConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(std::env::args().nth(1).ok_or("missing config path")?);
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
    let (mut drops, mut total) = (0, 0);
    for r in &results {
        let (d, t) = score_drops(&r.score_trace);
        drops += d;
        total += t;
    }
    eprintln!("{:.1}s", start.elapsed().as_secs_f64());
    println!("{drops}/{total} = {:.3}", drops as f64 / total.max(1) as f64);
    Ok(())
}
