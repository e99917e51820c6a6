//! Live measurement campaigns.
//!
//! A campaign is event-sourced: its belief is a fold of the recorded
//! observations over the prior, so [`Campaign::replay`] rebuilds the exact
//! state from the spec and the history. Suggestions never touch the belief;
//! they only set the pending marker and advance the suggestion counter.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::{enumerate_patterns, fuse_lasso_sample, rls_update, BeliefSnapshot, BeliefState, SparsityPattern};
use crate::error::{Error, Result};
use crate::kg::{batch_spkg_select, spkg_scores, DEFAULT_MC_SAMPLES};
use crate::lasso::{covariance_estimate, homotopy_update, lambda_schedule, LassoState, DEFAULT_LAMBDA_SCALE};
use crate::prior::PriorBundle;
use crate::rna::{
    basis_row, build_basis, expand_library, BasisSource, EnergyTable, ExpansionContext, Probe, TargetMolecule,
};
use crate::rng::{stream_id, stream_rng, Purpose};

/// Frozen at creation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// B.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// L.
    #[serde(default = "default_patterns")]
    pub max_patterns: usize,
    /// Q.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    /// Constant c of the λ schedule.
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    /// Measurement noise assumed for scoring and for observations sent without one.
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub belief_model: BeliefModel,
}

/// How observations update the belief.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefModel {
    /// Lasso homotopy, covariance estimate, fusion; scored over sparsity patterns.
    #[default]
    Sparse,
    /// Conjugate recursive least squares; scored as the dense linear KG.
    Linear,
}

fn default_batch() -> usize {
    3
}
fn default_patterns() -> usize {
    20
}
fn default_mc() -> usize {
    DEFAULT_MC_SAMPLES
}
fn default_lambda_scale() -> f64 {
    DEFAULT_LAMBDA_SCALE
}

impl PolicyConfig {
    pub fn new(noise_sd: f64) -> Self {
        Self {
            batch_size: default_batch(),
            max_patterns: default_patterns(),
            mc_samples: default_mc(),
            lambda_scale: default_lambda_scale(),
            noise_sd,
            seed: 0,
            belief_model: BeliefModel::Sparse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("policy.batch_size", "must be at least 1"));
        }
        if self.max_patterns == 0 {
            return Err(Error::invalid("policy.max_patterns", "must be at least 1"));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("policy.mc_samples", "must be at least 1"));
        }
        if !(self.lambda_scale.is_finite() && self.lambda_scale > 0.0) {
            return Err(Error::invalid("policy.lambda_scale", "must be positive"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::invalid("policy.noise_sd", "must be positive"));
        }
        Ok(())
    }
}

/// Everything a campaign starts from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub molecule: TargetMolecule,
    pub library: Vec<Probe>,
    pub prior: PriorBundle,
    pub policy: PolicyConfig,
    /// `pair,energy` CSV replacing the bundled stacking table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_table: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestMode {
    Single,
    Batch,
    BatchMutagenesis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub mode: SuggestMode,
    pub probes: Vec<Probe>,
    /// Indices into `candidates`.
    pub indices: Vec<usize>,
    /// Value of each pick when it was made.
    pub per_step_scores: Vec<f64>,
    pub mc_standard_errors: Vec<f64>,
    /// The scored probes: the library, plus the proposed new probe in
    /// mutagenesis mode.
    pub candidates: Vec<Probe>,
    /// Exact first-step score of every candidate.
    pub scores: Vec<f64>,
    pub patterns: Vec<SparsityPattern>,
    /// A probe outside the library proposed by mutagenesis.
    pub new_probe: Option<Probe>,
    /// Suggestion counter value that keyed the random stream.
    pub counter: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub probe: Probe,
    pub value: f64,
    pub noise_sd: f64,
    /// Set when the probe joined the library with this observation.
    #[serde(default)]
    pub extends_library: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// The pending suggestion when the observation arrived, if any.
    pub suggestion: Option<Suggestion>,
    pub observation: ObservationRecord,
    /// Whether the Lasso path broke down and a full solve was used.
    pub fell_back: bool,
}

/// What changed with one observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDelta {
    pub probe_index: usize,
    pub predicted_before: f64,
    pub predicted_after: f64,
    pub max_abs_mean_change: f64,
    pub covariance_trace_change: f64,
    pub active_set: Vec<usize>,
    pub lambda: f64,
    pub fell_back: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub belief: BeliefSnapshot,
    pub inclusion_probabilities: Vec<f64>,
    pub library: Vec<Probe>,
    /// Φϑ plus intercepts.
    pub predicted_mean: Vec<f64>,
    /// √diag(ΦΣΦᵀ).
    pub predicted_sd: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub observations: usize,
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub map_pattern_size: usize,
    pub fallbacks: usize,
    /// Coefficient estimate masked by the MAP pattern.
    pub sparse_estimate: Vec<f64>,
    pub believed_best: Probe,
}

/// Persisted form: the spec, the event log and the bookkeeping needed to
/// reproduce suggestions. The belief is included for inspection and checked
/// against the replay on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignDocument {
    pub spec: CampaignSpec,
    pub history: Vec<HistoryEntry>,
    pub pending: Option<Suggestion>,
    pub counter: u64,
    pub version: u64,
    pub belief: BeliefSnapshot,
    pub lasso: LassoState,
}

#[derive(Clone, Debug)]
pub struct Campaign {
    spec: CampaignSpec,
    table: EnergyTable,
    library: Vec<Probe>,
    belief: BeliefState,
    lasso: LassoState,
    prior_mask: Vec<bool>,
    history: Vec<HistoryEntry>,
    pending: Option<Suggestion>,
    counter: u64,
    version: u64,
}

impl Campaign {
    /// Version 0, empty history.
    pub fn new(spec: CampaignSpec) -> Result<Self> {
        spec.policy.validate()?;
        let p = spec.molecule.len();
        if spec.prior.belief.p != p {
            return Err(Error::invalid(
                "prior",
                format!(
                    "prior has {} coefficients but the molecule has {p} nucleotides",
                    spec.prior.belief.p
                ),
            ));
        }
        if spec.library.is_empty() {
            return Err(Error::invalid("library", "probe library is empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for probe in &spec.library {
            if !seen.insert(*probe) {
                return Err(Error::invalid("library", format!("duplicate probe {probe}")));
            }
        }
        let table = match &spec.energy_table {
            Some(text) => EnergyTable::parse_csv(text).map_err(|e| Error::invalid("energy_table", e.to_string()))?,
            None => EnergyTable::bundled(),
        };
        let basis = build_basis(&spec.molecule, &spec.library, &BasisSource::Energy(table.clone()))
            .map_err(|e| Error::invalid("library", e.to_string()))?;
        let (gaussian, sparsity) = spec
            .prior
            .to_parts()
            .map_err(|e| Error::invalid("prior", e.to_string()))?;
        let prior_mask = gaussian.mean.iter().map(|&v| v != 0.0).collect();
        let belief = BeliefState::new(
            gaussian,
            sparsity,
            Arc::new(basis),
            vec![spec.policy.noise_sd; spec.library.len()],
        )?;
        let lasso = LassoState::empty(p, lambda_schedule(0, p, spec.policy.noise_sd, spec.policy.lambda_scale));
        Ok(Self {
            library: spec.library.clone(),
            spec,
            table,
            belief,
            lasso,
            prior_mask,
            history: Vec::new(),
            pending: None,
            counter: 0,
            version: 0,
        })
    }

    /// Folds `history` over the prior.
    pub fn replay(spec: CampaignSpec, history: &[HistoryEntry]) -> Result<Self> {
        let mut c = Self::new(spec)?;
        for entry in history {
            let obs = &entry.observation;
            let out = c.apply(obs.probe, obs.value, obs.noise_sd, obs.extends_library)?;
            c.history.push(HistoryEntry {
                suggestion: entry.suggestion.clone(),
                observation: obs.clone(),
                fell_back: out.fell_back,
            });
            c.version += 1;
        }
        Ok(c)
    }

    pub fn from_document(doc: CampaignDocument) -> Result<Self> {
        let mut c = Self::replay(doc.spec, &doc.history)?;
        if c.belief.snapshot() != doc.belief || c.lasso != doc.lasso {
            return Err(Error::invalid(
                "document",
                "stored belief does not match the replayed history",
            ));
        }
        if doc.version != c.version {
            return Err(Error::invalid("document", "version does not match the history length"));
        }
        c.pending = doc.pending;
        c.counter = doc.counter;
        Ok(c)
    }

    pub fn to_document(&self) -> CampaignDocument {
        CampaignDocument {
            spec: self.spec.clone(),
            history: self.history.clone(),
            pending: self.pending.clone(),
            counter: self.counter,
            version: self.version,
            belief: self.belief.snapshot(),
            lasso: self.lasso.clone(),
        }
    }

    pub fn spec(&self) -> &CampaignSpec {
        &self.spec
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn library(&self) -> &[Probe] {
        &self.library
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn lasso(&self) -> &LassoState {
        &self.lasso
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn pending(&self) -> Option<&Suggestion> {
        self.pending.as_ref()
    }

    /// Patterns drawn from the stream of suggestion number `counter`; the same
    /// stream then feeds the Monte Carlo batch.
    fn suggestion_rng(&self, counter: u64) -> rand_chacha::ChaCha8Rng {
        stream_rng(
            self.spec.policy.seed,
            stream_id(counter as u32, (counter >> 32) as u16, 0, Purpose::Suggestion),
        )
    }

    pub fn patterns_for(&self, counter: u64) -> Vec<SparsityPattern> {
        self.draw_patterns(&mut self.suggestion_rng(counter))
    }

    fn draw_patterns(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<SparsityPattern> {
        match self.spec.policy.belief_model {
            BeliefModel::Sparse => enumerate_patterns(
                &self.belief.sparsity,
                self.spec.policy.max_patterns,
                Some(&self.prior_mask),
                rng,
            ),
            BeliefModel::Linear => vec![SparsityPattern::all_true(self.belief.num_coefficients())],
        }
    }

    /// Returns the pending suggestion when it has the requested mode,
    /// otherwise computes a new one from the next counter value.
    pub fn suggest(&mut self, mode: SuggestMode) -> Result<Suggestion> {
        if let Some(s) = &self.pending {
            if s.mode == mode {
                return Ok(s.clone());
            }
        }
        let s = self.compute_suggestion(mode, self.counter)?;
        self.counter += 1;
        self.pending = Some(s.clone());
        Ok(s)
    }

    fn compute_suggestion(&self, mode: SuggestMode, counter: u64) -> Result<Suggestion> {
        let policy = &self.spec.policy;
        let mut rng = self.suggestion_rng(counter);
        let patterns = self.draw_patterns(&mut rng);
        let mut candidates = self.library.clone();
        let mut new_probe = None;
        let mut view = self.belief.clone();
        if mode == SuggestMode::BatchMutagenesis {
            let ctx = ExpansionContext {
                molecule: &self.spec.molecule,
                table: &self.table,
                noise_sd: policy.noise_sd,
            };
            let pick = expand_library(&self.library, &self.belief, ctx, |v| spkg_scores(v, &patterns))?;
            if pick.added {
                let row = basis_row(&self.spec.molecule, &pick.probe, &self.table)?;
                let basis = self.belief.basis.push_row(&row, 0.0)?;
                let mut noise = self.belief.noise_sd.clone();
                noise.push(policy.noise_sd);
                view = self.belief.with_basis(Arc::new(basis), noise)?;
                candidates.push(pick.probe);
                new_probe = Some(pick.probe);
            }
        }
        let (indices, per_step_scores, mc_standard_errors, scores) = match mode {
            SuggestMode::Single => {
                let s = spkg_scores(&view, &patterns)?;
                (vec![s.argmax], vec![s.max()], vec![0.0], s.scores)
            }
            SuggestMode::Batch | SuggestMode::BatchMutagenesis => {
                let d = batch_spkg_select(&view, &patterns, policy.batch_size, policy.mc_samples, &mut rng)?;
                let first = d.step_values.first().cloned().unwrap_or_default();
                (d.alternatives, d.per_step_scores, d.mc_standard_errors, first)
            }
        };
        Ok(Suggestion {
            mode,
            probes: indices.iter().map(|&i| candidates[i]).collect(),
            indices,
            per_step_scores,
            mc_standard_errors,
            candidates,
            scores,
            patterns,
            new_probe,
            counter,
        })
    }

    /// Records one measurement. `expected_version` must equal the current
    /// version. The probe must be in the library or be the new probe of the
    /// pending suggestion.
    pub fn record(
        &mut self,
        probe: Probe,
        value: f64,
        noise_sd: Option<f64>,
        expected_version: u64,
    ) -> Result<(u64, PosteriorDelta)> {
        if expected_version != self.version {
            return Err(Error::VersionConflict {
                expected: expected_version,
                current: self.version,
            });
        }
        if !value.is_finite() {
            return Err(Error::invalid("value", "must be finite"));
        }
        let sd = noise_sd.unwrap_or(self.spec.policy.noise_sd);
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::invalid("noise_sd", "must be positive"));
        }
        let extends = if self.library.contains(&probe) {
            false
        } else if self.pending.as_ref().and_then(|s| s.new_probe) == Some(probe) {
            true
        } else {
            return Err(Error::invalid("probe", format!("{probe} is not in the probe library")));
        };
        // Work on a copy so a failure leaves the campaign untouched.
        let mut next = self.clone();
        let delta = next.apply(probe, value, sd, extends)?;
        next.history.push(HistoryEntry {
            suggestion: next.pending.take(),
            observation: ObservationRecord {
                probe,
                value,
                noise_sd: sd,
                extends_library: extends,
            },
            fell_back: delta.fell_back,
        });
        next.version += 1;
        *self = next;
        Ok((self.version, delta))
    }

    fn apply(&mut self, probe: Probe, value: f64, sd: f64, extends: bool) -> Result<PosteriorDelta> {
        if extends {
            if self.library.contains(&probe) {
                return Err(Error::invalid("probe", format!("{probe} is already in the library")));
            }
            let row = basis_row(&self.spec.molecule, &probe, &self.table)?;
            let basis = self.belief.basis.push_row(&row, 0.0)?;
            let mut noise = self.belief.noise_sd.clone();
            noise.push(self.spec.policy.noise_sd);
            self.belief = self.belief.with_basis(Arc::new(basis), noise)?;
            self.library.push(probe);
        }
        let x = self
            .library
            .iter()
            .position(|q| *q == probe)
            .ok_or_else(|| Error::invalid("probe", format!("{probe} is not in the probe library")))?;
        let before_mean = self.belief.gaussian.mean.clone();
        let before_trace = self.belief.gaussian.covariance.trace();
        let predict = |b: &BeliefState| b.basis.row(x).dot(&b.gaussian.mean) + b.basis.intercepts[x];
        let predicted_before = predict(&self.belief);

        let row = self.belief.basis.row(x);
        if self.spec.policy.belief_model == BeliefModel::Linear {
            self.belief.gaussian =
                rls_update(&self.belief.gaussian, &row, value - self.belief.basis.intercepts[x], sd)?;
            let change: DVector<f64> = &self.belief.gaussian.mean - &before_mean;
            return Ok(PosteriorDelta {
                probe_index: x,
                predicted_before,
                predicted_after: predict(&self.belief),
                max_abs_mean_change: change.amax(),
                covariance_trace_change: self.belief.gaussian.covariance.trace() - before_trace,
                active_set: Vec::new(),
                lambda: self.lasso.lambda,
                fell_back: false,
            });
        }
        let p = self.belief.num_coefficients();
        let n = self.lasso.num_observations() + 1;
        let lambda = lambda_schedule(n, p, sd, self.spec.policy.lambda_scale);
        let out = homotopy_update(&self.lasso, &row, value - self.belief.basis.intercepts[x], lambda)?;
        self.lasso = out.state;
        let active = &self.lasso.active_set;
        let cov = if active.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            covariance_estimate(&self.lasso, sd)?
        };
        self.belief = fuse_lasso_sample(&self.belief, &self.lasso.estimate, &cov, active)?;

        let change: DVector<f64> = &self.belief.gaussian.mean - &before_mean;
        Ok(PosteriorDelta {
            probe_index: x,
            predicted_before,
            predicted_after: predict(&self.belief),
            max_abs_mean_change: change.amax(),
            covariance_trace_change: self.belief.gaussian.covariance.trace() - before_trace,
            active_set: self.lasso.active_set.clone(),
            lambda: self.lasso.lambda,
            fell_back: out.fell_back,
        })
    }

    pub fn posterior(&self) -> Posterior {
        let b = &self.belief;
        let predicted = &b.basis.rows * &b.gaussian.mean + &b.basis.intercepts;
        let pc = &b.basis.rows * &b.gaussian.covariance;
        let predicted_sd = (0..b.num_alternatives())
            .map(|m| pc.row(m).dot(&b.basis.rows.row(m)).max(0.0).sqrt())
            .collect();
        let estimate = b.sparse_estimate();
        let believed = &b.basis.rows * &estimate + &b.basis.intercepts;
        let best = crate::linalg::argmax(believed.as_slice());
        Posterior {
            belief: b.snapshot(),
            inclusion_probabilities: b.sparsity.inclusion_probabilities(),
            library: self.library.clone(),
            predicted_mean: predicted.iter().copied().collect(),
            predicted_sd,
            diagnostics: Diagnostics {
                observations: self.history.len(),
                lambda: self.lasso.lambda,
                active_set: self.lasso.active_set.clone(),
                map_pattern_size: b.sparsity.map_pattern().iter().filter(|&&v| v).count(),
                fallbacks: self.history.iter().filter(|h| h.fell_back).count(),
                sparse_estimate: estimate.iter().copied().collect(),
                believed_best: self.library[best],
            },
        }
    }
}
