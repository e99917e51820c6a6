//! Measurement policies: knowledge-gradient scores for lookup, linear and
//! sparse beliefs, their Monte Carlo batch extensions, and random exploration.

mod batch;
mod hfunc;

pub use batch::{batch_kg_select, batch_spkg_select, exploration_select, mc_kg, BatchDecision, McEstimate};
pub use hfunc::{h_function, normal_cdf, normal_loss, normal_pdf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::{project_gaussian, BeliefState, GaussianBelief, SparsityPattern};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rna::BasisMatrix;

/// Scores below this are reported as exactly zero.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Default Monte Carlo sample count per candidate.
pub const DEFAULT_MC_SAMPLES: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGScores {
    pub scores: Vec<f64>,
    pub argmax: usize,
    /// Set when another alternative shares the maximum score.
    #[serde(default)]
    pub tie: bool,
}

impl KGScores {
    pub fn from_raw(mut scores: Vec<f64>) -> Self {
        for s in &mut scores {
            if *s < SCORE_FLOOR {
                *s = 0.0;
            }
        }
        let argmax = linalg::argmax(&scores);
        let best = scores.get(argmax).copied().unwrap_or(0.0);
        let tie = scores.iter().filter(|&&s| s == best).count() > 1;
        Self { scores, argmax, tie }
    }

    pub fn max(&self) -> f64 {
        self.scores[self.argmax]
    }
}

/// `σ̃(Σ, x) = Σ e_x / sqrt(σ_x² + Σ_xx)`.
pub fn sigma_tilde(cov: &DMatrix<f64>, x: usize, noise_sd: f64) -> Result<DVector<f64>> {
    if x >= cov.nrows() {
        return Err(Error::dim("alternative index", cov.nrows(), x));
    }
    let denom = noise_sd * noise_sd + cov[(x, x)];
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::DegenerateVariance(denom));
    }
    Ok(cov.column(x) / denom.sqrt())
}

fn raw_lookup_scores(mean: &DVector<f64>, cov: &DMatrix<f64>, noise_sds: &[f64]) -> Result<Vec<f64>> {
    let m = mean.len();
    if cov.nrows() != m || cov.ncols() != m {
        return Err(Error::dim("lookup covariance", m, cov.nrows()));
    }
    if noise_sds.len() != m {
        return Err(Error::dim("noise_sds", m, noise_sds.len()));
    }
    let a = mean.as_slice();
    (0..m)
        .map(|x| {
            let b = sigma_tilde(cov, x, noise_sds[x])?;
            Ok(h_function(a, b.as_slice()))
        })
        .collect()
}

/// Knowledge-gradient score of every alternative under a correlated normal
/// belief on the alternatives themselves.
pub fn kg_lookup(mean: &DVector<f64>, cov: &DMatrix<f64>, noise_sds: &[f64]) -> Result<KGScores> {
    Ok(KGScores::from_raw(raw_lookup_scores(mean, cov, noise_sds)?))
}

/// Knowledge gradient for a dense linear belief: `kg_lookup` on `(Φϑ, ΦΣΦᵀ)`.
pub fn kg_linear(belief: &GaussianBelief, basis: &BasisMatrix, noise_sds: &[f64]) -> Result<KGScores> {
    let (mean, cov) = project_gaussian(belief, basis, None)?;
    kg_lookup(&mean, &cov, noise_sds)
}

pub(crate) fn check_pattern_weights(patterns: &[SparsityPattern], p: usize) -> Result<()> {
    if patterns.is_empty() {
        return Err(Error::invalid("patterns", "at least one sparsity pattern is required"));
    }
    for pat in patterns {
        if pat.mask.len() != p {
            return Err(Error::dim("pattern mask", p, pat.mask.len()));
        }
        if !(pat.weight.is_finite() && pat.weight >= 0.0) {
            return Err(Error::invalid("patterns", "weights must be nonnegative"));
        }
    }
    let total: f64 = patterns.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "patterns",
            format!("weights sum to {total}, expected 1"),
        ));
    }
    Ok(())
}

/// Sparse knowledge gradient: pattern-weighted mixture of the knowledge
/// gradient computed on each pattern's restricted belief.
pub fn spkg_scores(belief: &BeliefState, patterns: &[SparsityPattern]) -> Result<KGScores> {
    check_pattern_weights(patterns, belief.num_coefficients())?;
    let m = belief.num_alternatives();
    let mut total = vec![0.0; m];
    for pat in patterns.iter().filter(|p| p.weight > 0.0) {
        let (mean, cov) = project_gaussian(&belief.gaussian, &belief.basis, Some(&pat.mask))?;
        let raw = raw_lookup_scores(&mean, &cov, &belief.noise_sd)?;
        for (t, r) in total.iter_mut().zip(raw) {
            *t += pat.weight * r;
        }
    }
    Ok(KGScores::from_raw(total))
}
