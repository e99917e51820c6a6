use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentSetup, PolicyKind};
use super::metrics::{estimation_error, opportunity_cost};
use super::truth::sample_truth;
use crate::belief::{
    enumerate_patterns, fuse_lasso_sample, project_gaussian, rls_update, BeliefState, SparsityPattern,
};
use crate::error::Result;
use crate::kg::{batch_spkg_select, exploration_select, kg_linear, spkg_scores};
use crate::lasso::{covariance_estimate, homotopy_update, lambda_schedule, LassoState};
use crate::linalg;
use crate::rna::{expand_library, expanded_candidates, BasisMatrix, ExpansionContext, Probe};
use crate::rng::{stream_id, stream_rng, Purpose};

/// SpKG scores over the library at one decision epoch, and what was picked.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSnapshot {
    pub scores: Vec<f64>,
    pub picks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub policy: PolicyKind,
    pub noise_ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub decisions: Vec<Probe>,
    pub observations: Vec<f64>,
    pub oc_trajectory: Vec<f64>,
    /// `None` where the true optimum is zero.
    pub oc_pct_trajectory: Vec<Option<f64>>,
    pub estimation_error_trajectory: Vec<f64>,
    pub best_true_value_trajectory: Vec<f64>,
    pub homotopy_fallbacks: usize,
    #[serde(skip)]
    pub score_trace: Vec<ScoreSnapshot>,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub trials: usize,
    pub seed: u64,
}

/// Per-trial mutable state shared by all policies.
struct Trial<'a> {
    setup: &'a ExperimentSetup,
    alpha: Vec<f64>,
    library: Vec<Probe>,
    /// True mean of each library entry.
    mu: Vec<f64>,
    belief: BeliefState,
    lasso: LassoState,
    sigma: f64,
    fallbacks: usize,
    sparse: bool,
}

impl Trial<'_> {
    fn p(&self) -> usize {
        self.alpha.len()
    }

    fn add_probe(&mut self, probe: Probe, row: DVector<f64>) -> Result<()> {
        let basis = self.belief.basis.push_row(&row, 0.0)?;
        let mut noise = self.belief.noise_sd.clone();
        noise.push(self.sigma);
        self.mu.push(row.iter().zip(&self.alpha).map(|(a, b)| a * b).sum());
        self.library.push(probe);
        self.belief = self.belief.with_basis(Arc::new(basis), noise)?;
        Ok(())
    }

    /// Coefficient estimate the policy reports: the MAP-masked mean for the
    /// sparse belief, the plain mean for the linear belief.
    fn estimate(&self) -> DVector<f64> {
        if self.sparse {
            self.belief.sparse_estimate()
        } else {
            self.belief.gaussian.mean.clone()
        }
    }

    fn metrics(&self) -> Result<(f64, Option<f64>, f64, f64)> {
        let basis: &BasisMatrix = &self.belief.basis;
        let estimate = self.estimate();
        let predicted = &basis.rows * &estimate + &basis.intercepts;
        let believed = linalg::argmax(predicted.as_slice());
        let (oc, pct) = opportunity_cost(&self.mu, believed)?;
        let err = estimation_error(estimate.as_slice(), &self.alpha);
        let best = self.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((oc, pct, err, best))
    }

    /// Lasso step for one observation; the belief is fused separately.
    fn lasso_observe(&mut self, x: usize, y: f64) -> Result<()> {
        let row = self.belief.basis.row(x);
        let n = self.lasso.num_observations() + 1;
        let lambda = lambda_schedule(n, self.p(), self.sigma, self.setup.config.lambda_scale);
        let out = homotopy_update(&self.lasso, &row, y - self.belief.basis.intercepts[x], lambda)?;
        self.fallbacks += out.fell_back as usize;
        self.lasso = out.state;
        Ok(())
    }

    fn fuse(&mut self) -> Result<()> {
        let active = &self.lasso.active_set;
        let cov = if active.is_empty() {
            nalgebra::DMatrix::zeros(0, 0)
        } else {
            covariance_estimate(&self.lasso, self.sigma)?
        };
        self.belief = fuse_lasso_sample(&self.belief, &self.lasso.estimate, &cov, active)?;
        Ok(())
    }

    fn patterns(&self, rng: &mut ChaCha8Rng) -> Vec<SparsityPattern> {
        enumerate_patterns(
            &self.belief.sparsity,
            self.setup.config.max_patterns,
            Some(&self.setup.prior_mask),
            rng,
        )
    }
}

fn run_trial(
    setup: &ExperimentSetup,
    policy: PolicyKind,
    policy_index: usize,
    noise_index: usize,
    trial: usize,
    seed: u64,
) -> Result<ReplicationResult> {
    let cfg = &setup.config;
    let noise_ratio = cfg.noise_ratios[noise_index];
    let stream = |noise: u16, policy: u8, purpose| stream_rng(seed, stream_id(trial as u32, noise, policy, purpose));
    let mut truth_rng = stream(0, 0, Purpose::Truth);
    let mut noise_rng = stream(0, 0, Purpose::Noise);
    let mut policy_rng = stream(noise_index as u16, policy_index as u8 + 1, Purpose::Policy);

    let alpha = sample_truth(&setup.truth, &mut truth_rng)?;
    let a = DVector::from_column_slice(&alpha);
    let mu: Vec<f64> = (&setup.basis.rows * &a + &setup.basis.intercepts)
        .iter()
        .copied()
        .collect();
    let range = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max) - mu.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sigma = noise_ratio * range;
    if !(sigma > 0.0) {
        sigma = 1e-9;
    }
    let m = setup.library.len();
    let belief = BeliefState::new(
        setup.prior_gaussian.clone(),
        setup.prior_sparsity.clone(),
        setup.basis.clone(),
        vec![sigma; m],
    )?;
    let p = alpha.len();
    let mut t = Trial {
        setup,
        alpha,
        library: setup.library.clone(),
        mu,
        belief,
        lasso: LassoState::empty(p, lambda_schedule(0, p, sigma, cfg.lambda_scale)),
        sigma,
        fallbacks: 0,
        sparse: policy != PolicyKind::KgLinear,
    };

    let mut result = ReplicationResult {
        policy,
        noise_ratio,
        trial,
        seed,
        noise_sd: sigma,
        decisions: Vec::new(),
        observations: Vec::new(),
        oc_trajectory: Vec::new(),
        oc_pct_trajectory: Vec::new(),
        estimation_error_trajectory: Vec::new(),
        best_true_value_trajectory: Vec::new(),
        homotopy_fallbacks: 0,
        score_trace: Vec::new(),
    };
    let record = |r: &mut ReplicationResult, m: (f64, Option<f64>, f64, f64)| {
        r.oc_trajectory.push(m.0);
        r.oc_pct_trajectory.push(m.1);
        r.estimation_error_trajectory.push(m.2);
        r.best_true_value_trajectory.push(m.3);
    };
    record(&mut result, t.metrics()?);

    let budget = cfg.budget;
    let mut n = 0;
    while n < budget {
        let b = if policy.is_batch() {
            cfg.batch_size.min(budget - n)
        } else {
            1
        };
        let picks: Vec<usize> = match policy {
            PolicyKind::Explore => exploration_select(t.library.len(), 1, &mut policy_rng)?,
            PolicyKind::KgLinear => vec![kg_linear(&t.belief.gaussian, &t.belief.basis, &t.belief.noise_sd)?.argmax],
            PolicyKind::Spkg => {
                let patterns = t.patterns(&mut policy_rng);
                let s = spkg_scores(&t.belief, &patterns)?;
                result.score_trace.push(ScoreSnapshot {
                    scores: s.scores,
                    picks: vec![s.argmax],
                });
                vec![s.argmax]
            }
            PolicyKind::BatchSpkg | PolicyKind::BatchSpkgMutagenesis => {
                let patterns = t.patterns(&mut policy_rng);
                if policy == PolicyKind::BatchSpkgMutagenesis {
                    let ctx = ExpansionContext {
                        molecule: &setup.molecule,
                        table: &setup.table,
                        noise_sd: sigma,
                    };
                    let pick = expand_library(&t.library, &t.belief, ctx, |view| spkg_scores(view, &patterns))?;
                    if pick.added {
                        let row = crate::rna::basis_row(&setup.molecule, &pick.probe, &setup.table)?;
                        t.add_probe(pick.probe, row)?;
                    }
                }
                let d = batch_spkg_select(&t.belief, &patterns, b, cfg.mc_samples, &mut policy_rng)?;
                result.score_trace.push(ScoreSnapshot {
                    scores: d.step_values[0].clone(),
                    picks: d.alternatives.clone(),
                });
                d.alternatives
            }
            PolicyKind::ExploreMutagenesis => {
                let ctx = ExpansionContext {
                    molecule: &setup.molecule,
                    table: &setup.table,
                    noise_sd: sigma,
                };
                let cand = expanded_candidates(&t.library, &t.belief, ctx)?;
                let k = policy_rng.random_range(0..cand.probes.len());
                if k >= cand.existing {
                    t.add_probe(cand.probes[k], cand.basis.row(k))?;
                }
                exploration_select(t.library.len(), b, &mut policy_rng)?
            }
        };

        let before = t.metrics()?;
        let last = picks.len() - 1;
        for (i, &x) in picks.iter().enumerate() {
            let z: f64 = noise_rng.sample(StandardNormal);
            let y = t.mu[x] + t.belief.noise_sd[x] * z;
            result.decisions.push(t.library[x]);
            result.observations.push(y);
            match policy {
                PolicyKind::KgLinear => {
                    let row = t.belief.basis.row(x);
                    let g = rls_update(
                        &t.belief.gaussian,
                        &row,
                        y - t.belief.basis.intercepts[x],
                        t.belief.noise_sd[x],
                    )?;
                    t.belief.gaussian = g;
                }
                _ => {
                    t.lasso_observe(x, y)?;
                    if i == last {
                        t.fuse()?;
                    }
                }
            }
            n += 1;
            if i == last {
                record(&mut result, t.metrics()?);
            } else {
                record(&mut result, before);
            }
        }
    }
    result.homotopy_fallbacks = t.fallbacks;
    Ok(result)
}

/// Runs every (noise ratio, trial, policy) combination. Results are ordered
/// by noise ratio, then trial, then policy as listed in the config.
pub fn run_replications(setup: &ExperimentSetup, opts: RunOptions) -> Result<Vec<ReplicationResult>> {
    let cfg = &setup.config;
    let mut jobs = Vec::new();
    for noise_index in 0..cfg.noise_ratios.len() {
        for trial in 0..opts.trials {
            for (policy_index, &policy) in cfg.policies.iter().enumerate() {
                jobs.push((noise_index, trial, policy_index, policy));
            }
        }
    }
    jobs.par_iter()
        .map(|&(noise_index, trial, policy_index, policy)| {
            run_trial(setup, policy, policy_index, noise_index, trial, opts.seed)
        })
        .collect()
}

/// Posterior predicted mean and sd over a belief's alternatives.
pub fn predicted_alternatives(belief: &BeliefState) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mean, cov) = project_gaussian(&belief.gaussian, &belief.basis, None)?;
    let sd = (0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    Ok((mean.iter().copied().collect(), sd))
}
