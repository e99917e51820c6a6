//! Subcommands that run in-process.

use std::io::Write;
use std::path::Path;

use spkg_core::belief::BeliefSnapshot;
use spkg_core::campaign::{BeliefModel, Campaign, CampaignSpec, PolicyConfig, SuggestMode};
use spkg_core::prior::{build_prior, load_footprinting, FootprintingProfile, PriorBundle, PriorOptions};
use spkg_core::rna::{
    generate_probe_library, mutagenesis_neighbors_within, read_probe_library, LibrarySpec, Probe, TargetMolecule,
};
use spkg_core::sim::synthetic::bundled_target;
use spkg_core::sim::{export_results, prepare, run_replications, ExperimentConfig, RunOptions};

use crate::{
    parse_probe, usage, CliError, FitPriorArgs, LibraryArgs, MutateArgs, ScoreArgs, ScorePolicy, SimulateArgs,
    TargetArgs,
};

pub(crate) fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let text =
        std::fs::read_to_string(&a.config).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(usage(a.config.display()))?;
    if a.seed.is_none() {
        tracing::info!(seed = cfg.seed, "using the config seed");
    }
    let base = a.config.parent().unwrap_or(Path::new("."));
    let setup = prepare(&cfg, base).map_err(usage(a.config.display()))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    let opts = RunOptions {
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let results = pool.install(|| run_replications(&setup, opts))?;
    let summary = export_results(&results, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub(crate) fn fit_prior(a: FitPriorArgs) -> Result<(), CliError> {
    let loaded = load_footprinting(&a.profile).map_err(usage(a.profile.display()))?;
    if !loaded.gaps.is_empty() {
        tracing::warn!(missing = loaded.gaps.len(), "missing positions filled with 0");
    }
    let mut profile = loaded.profile;
    if let Some((s, e)) = a.window {
        let (lo, hi) = (a.first_position, a.first_position + profile.len() - 1);
        if s < lo || e < s || e > hi {
            return Err(CliError::Usage(format!(
                "window [{s}, {e}] outside the profile [{lo}, {hi}]"
            )));
        }
        let values = profile.values[s - lo..=e - lo].to_vec();
        profile =
            FootprintingProfile::new(values, format!("{} [{s}, {e}]", profile.source)).map_err(usage("window"))?;
    }
    let opts = PriorOptions {
        r: a.r,
        kappa: a.kappa,
        w: a.w,
        max_lag: a.max_lag,
        budget: a.budget,
    };
    let bundle = build_prior(&profile, &opts).map_err(usage("fit-prior"))?;
    bundle.write(&a.out)?;
    eprintln!("kappa = {}", bundle.kappa);
    Ok(())
}

pub(crate) fn load_molecule(t: &TargetArgs) -> Result<TargetMolecule, CliError> {
    let full = match &t.molecule {
        Some(path) => TargetMolecule::read_fasta(path).map_err(usage(path.display()))?,
        None => bundled_target().map_err(usage("bundled target"))?.0,
    };
    match t.window {
        Some((s, e)) => full.window(s, e).map_err(usage("--window")),
        None => Ok(full),
    }
}

/// Library with display names.
pub(crate) fn load_library(molecule: &TargetMolecule, l: &LibraryArgs) -> Result<Vec<(String, Probe)>, CliError> {
    if let Some(path) = &l.library {
        let lib = read_probe_library(path).map_err(usage(path.display()))?;
        for (name, p) in &lib {
            if !p.within(molecule.first_position(), molecule.last_position()) {
                return Err(CliError::Usage(format!(
                    "probe {name} [{}, {}] lies outside the molecule [{}, {}]",
                    p.start,
                    p.end,
                    molecule.first_position(),
                    molecule.last_position()
                )));
            }
        }
        return Ok(lib);
    }
    let spec = library_spec(l);
    let probes = generate_probe_library(molecule, &spec).map_err(usage("library"))?;
    Ok(probes
        .into_iter()
        .map(|p| (format!("{}-{}", p.start, p.end), p))
        .collect())
}

pub(crate) fn library_spec(l: &LibraryArgs) -> LibrarySpec {
    match (l.uniform, l.mixed_tiling) {
        (Some((length, overlap)), _) => LibrarySpec::Uniform { length, overlap },
        (None, Some((start, end))) => LibrarySpec::MixedTiling { start, end },
        (None, None) => LibrarySpec::Uniform { length: 8, overlap: 5 },
    }
}

/// Accepts a prior bundle or a bare belief snapshot.
pub(crate) fn load_belief(path: &Path) -> Result<PriorBundle, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    match serde_json::from_str::<PriorBundle>(&text) {
        Ok(b) => Ok(b),
        Err(bundle_err) => match serde_json::from_str::<BeliefSnapshot>(&text) {
            Ok(belief) => Ok(PriorBundle {
                belief,
                kappa: f64::NAN,
                r: f64::NAN,
                w: f64::NAN,
            }),
            Err(_) => Err(CliError::Usage(format!("{}: {bundle_err}", path.display()))),
        },
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ScoreRow {
    pub probe: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub above_mean: bool,
}

/// Scores every probe; `above_mean` marks scores strictly above the mean score.
pub fn score_table(names: &[String], probes: &[Probe], scores: &[f64]) -> Vec<ScoreRow> {
    let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    names
        .iter()
        .zip(probes)
        .zip(scores)
        .map(|((n, p), &s)| ScoreRow {
            probe: n.clone(),
            start: p.start,
            end: p.end,
            score: s,
            above_mean: s > mean,
        })
        .collect()
}

pub(crate) fn score(a: ScoreArgs) -> Result<(), CliError> {
    let molecule = load_molecule(&a.target)?;
    let named = load_library(&molecule, &a.library)?;
    let prior = load_belief(&a.belief)?;
    let (names, library): (Vec<String>, Vec<Probe>) = named.into_iter().unzip();
    tracing::info!(seed = a.seed, "scoring");
    let spec = CampaignSpec {
        molecule,
        library: library.clone(),
        prior,
        policy: PolicyConfig {
            batch_size: a.batch_size,
            max_patterns: a.max_patterns,
            mc_samples: a.mc_samples,
            seed: a.seed,
            belief_model: match a.policy {
                ScorePolicy::KgLinear => BeliefModel::Linear,
                _ => BeliefModel::Sparse,
            },
            ..PolicyConfig::new(a.noise_sd)
        },
        energy_table: None,
    };
    let mut campaign = Campaign::new(spec).map_err(usage("score"))?;
    let mode = match a.policy {
        ScorePolicy::BatchSpkg => SuggestMode::Batch,
        _ => SuggestMode::Single,
    };
    let sug = campaign.suggest(mode)?;
    let rows = score_table(&names, &library, &sug.scores);
    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if mode == SuggestMode::Batch {
        let picks: Vec<String> = sug.probes.iter().map(|p| format!("[{}, {}]", p.start, p.end)).collect();
        eprintln!("batch: {}", picks.join(" "));
    }
    Ok(())
}

pub(crate) fn mutate(a: MutateArgs) -> Result<(), CliError> {
    let probe = parse_probe(&a.probe)?;
    let (lo, hi) = match a.p {
        Some(p) => (1, p),
        None => {
            let m = load_molecule(&a.target)?;
            (m.first_position(), m.last_position())
        }
    };
    if !probe.within(lo, hi) {
        return Err(CliError::Usage(format!(
            "probe [{}, {}] lies outside [{lo}, {hi}]",
            probe.start, probe.end
        )));
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for q in mutagenesis_neighbors_within(&probe, lo, hi) {
        writeln!(out, "{},{}", q.start, q.end)?;
    }
    Ok(())
}
