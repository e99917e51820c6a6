//! Experiment configuration (JSON) and its resolution into a ready-to-run setup.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::synthetic::bundled_target;
use super::truth::TruthSpec;
use crate::belief::{GaussianBelief, SparsityBelief};
use crate::error::{Error, Result};
use crate::lasso::DEFAULT_LAMBDA_SCALE;
use crate::prior::{self, load_footprinting, FootprintingProfile, PriorOptions, DEFAULT_NOISE_RATIO};
use crate::rna::{
    build_basis, generate_probe_library, BasisMatrix, BasisSource, EnergyTable, LibrarySpec, Probe, TargetMolecule,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Explore,
    KgLinear,
    Spkg,
    BatchSpkg,
    BatchSpkgMutagenesis,
    ExploreMutagenesis,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Explore => "explore",
            PolicyKind::KgLinear => "kg_linear",
            PolicyKind::Spkg => "spkg",
            PolicyKind::BatchSpkg => "batch_spkg",
            PolicyKind::BatchSpkgMutagenesis => "batch_spkg_mutagenesis",
            PolicyKind::ExploreMutagenesis => "explore_mutagenesis",
        }
    }

    /// Policies that measure `batch_size` alternatives per decision.
    pub fn is_batch(self) -> bool {
        matches!(
            self,
            PolicyKind::BatchSpkg | PolicyKind::BatchSpkgMutagenesis | PolicyKind::ExploreMutagenesis
        )
    }

    pub fn is_mutagenesis(self) -> bool {
        matches!(self, PolicyKind::BatchSpkgMutagenesis | PolicyKind::ExploreMutagenesis)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Truths are centered on the prior profile.
    Good,
    /// Truths are circularly shifted away from the prior profile.
    #[default]
    Bad,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// FASTA file; the bundled synthetic target when absent.
    #[serde(default)]
    pub molecule: Option<PathBuf>,
    /// `position,value` CSV; required with `molecule`.
    #[serde(default)]
    pub profile: Option<PathBuf>,
    /// Molecule position of the profile's first row.
    #[serde(default)]
    pub profile_start: Option<usize>,
    /// Restrict the experiment to molecule positions `[start, end]`.
    #[serde(default)]
    pub window: Option<(usize, usize)>,
    #[serde(default)]
    pub energy_table: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default)]
    pub mode: PriorMode,
    /// Defaults to 20 for the good prior and 10 for the bad one.
    #[serde(default)]
    pub w: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    /// Fitted from the full profile when absent.
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default = "default_perturb")]
    pub perturb_ratio: f64,
    #[serde(default = "default_kappa_sd")]
    pub kappa_sd: f64,
    /// Defaults to the prior's decay rate.
    #[serde(default)]
    pub kappa_mean: Option<f64>,
    /// Defaults to `[0, 0]` for the good prior and `[20, 50]` for the bad one.
    #[serde(default)]
    pub shift: Option<(usize, usize)>,
}

fn default_perturb() -> f64 {
    10.0
}
fn default_kappa_sd() -> f64 {
    0.1
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            perturb_ratio: default_perturb(),
            kappa_sd: default_kappa_sd(),
            kappa_mean: None,
            shift: None,
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_one() -> usize {
    1
}
fn default_patterns() -> usize {
    20
}
fn default_mc() -> usize {
    1000
}
fn default_lambda_scale() -> f64 {
    DEFAULT_LAMBDA_SCALE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub target: TargetConfig,
    pub library: LibrarySpec,
    pub policies: Vec<PolicyKind>,
    /// Measurements per trial.
    pub budget: usize,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    pub noise_ratios: Vec<f64>,
    #[serde(default = "default_patterns")]
    pub max_patterns: usize,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    #[serde(default = "default_one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("policies", "at least one policy is required"));
        }
        if self.noise_ratios.is_empty() || self.noise_ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("noise_ratios", "need at least one positive noise ratio"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.max_patterns == 0 {
            return Err(Error::invalid("max_patterns", "must be at least 1"));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "trials must be ≥ 1"));
        }
        if !(self.lambda_scale.is_finite() && self.lambda_scale >= 0.0) {
            return Err(Error::invalid("lambda_scale", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn w(&self) -> f64 {
        self.prior.w.unwrap_or(match self.prior.mode {
            PriorMode::Good => 20.0,
            PriorMode::Bad => 10.0,
        })
    }

    pub fn shift_range(&self) -> (usize, usize) {
        self.truth.shift.unwrap_or(match self.prior.mode {
            PriorMode::Good => (0, 0),
            PriorMode::Bad => (20, 50),
        })
    }
}

/// Everything a trial needs that does not depend on the trial.
#[derive(Clone, Debug)]
pub struct ExperimentSetup {
    pub config: ExperimentConfig,
    pub molecule: TargetMolecule,
    pub profile: FootprintingProfile,
    pub table: EnergyTable,
    pub library: Vec<Probe>,
    pub basis: Arc<BasisMatrix>,
    pub prior_gaussian: GaussianBelief,
    pub prior_sparsity: SparsityBelief,
    pub prior_mask: Vec<bool>,
    pub kappa: f64,
    pub truth: TruthSpec,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the target, builds the library, basis and prior. Relative paths in
/// the config are taken relative to `base_dir`.
pub fn prepare(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentSetup> {
    config.validate()?;
    let t = &config.target;
    let (molecule, profile) = match (&t.molecule, &t.profile) {
        (None, None) => bundled_target()?,
        (Some(m), Some(pr)) => {
            let mol = TargetMolecule::read_fasta(&resolve(base_dir, m))?;
            let loaded = load_footprinting(&resolve(base_dir, pr))?;
            if !loaded.gaps.is_empty() {
                log::warn!("profile has {} missing positions filled with 0", loaded.gaps.len());
            }
            let start = t.profile_start.unwrap_or(mol.first_position());
            let end = start + loaded.profile.len() - 1;
            (mol.window(start, end)?, loaded.profile)
        }
        _ => {
            return Err(Error::invalid("target", "molecule and profile must be given together"));
        }
    };
    if molecule.len() != profile.len() {
        return Err(Error::dim("profile length", molecule.len(), profile.len()));
    }

    let r = config.prior.r.unwrap_or(DEFAULT_NOISE_RATIO);
    let kappa = match config.prior.kappa {
        Some(k) => k,
        None => prior::fit_decay_rate(&profile, prior::DEFAULT_MAX_LAG.min(profile.len() - 1))?.0,
    };

    let (molecule, profile) = match t.window {
        None => (molecule, profile),
        Some((a, b)) => {
            let w = molecule.window(a, b)?;
            let off = a - molecule.first_position();
            let values = profile.values[off..off + w.len()].to_vec();
            let source = format!("{} [{a}, {b}]", profile.source);
            (w, FootprintingProfile::new(values, source)?)
        }
    };

    let table = match &t.energy_table {
        Some(p) => EnergyTable::read_csv(&resolve(base_dir, p))?,
        None => EnergyTable::bundled(),
    };
    let library = generate_probe_library(&molecule, &config.library)?;
    let basis = build_basis(&molecule, &library, &BasisSource::Energy(table.clone()))?;

    let bundle = prior::build_prior(
        &profile,
        &PriorOptions {
            r,
            kappa: Some(kappa),
            w: config.w(),
            max_lag: prior::DEFAULT_MAX_LAG,
            budget: Some(config.budget),
        },
    )?;
    let (prior_gaussian, prior_sparsity) = bundle.to_parts()?;

    let truth = TruthSpec {
        base_profile: profile.clone(),
        perturb_ratio: config.truth.perturb_ratio,
        kappa_mean: config.truth.kappa_mean.unwrap_or(kappa),
        kappa_sd: config.truth.kappa_sd,
        shift_range: config.shift_range(),
    };
    truth.validate()?;

    Ok(ExperimentSetup {
        config: config.clone(),
        prior_mask: profile.support(),
        molecule,
        profile,
        table,
        library,
        basis: Arc::new(basis),
        prior_gaussian,
        prior_sparsity,
        kappa,
        truth,
    })
}
