//! Belief states over accessibility coefficients and their Bayesian updates.
//!
//! The joint belief has two parts: a Gaussian over the coefficient vector
//! (mean and covariance in parameter space) and an independent
//! Beta-Bernoulli belief over whether each coefficient is nonzero. Every
//! update here is a pure function that returns a fresh state.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::rna::BasisMatrix;

/// Tolerance used when deciding whether an input covariance is PSD.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, mut covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::dim("covariance columns", covariance.nrows(), covariance.ncols()));
        }
        if covariance.nrows() != mean.len() {
            return Err(Error::dim("covariance rows vs mean", mean.len(), covariance.nrows()));
        }
        if linalg::max_asymmetry(&covariance) > 1e-9 * (1.0 + covariance.amax()) {
            return Err(Error::invalid("covariance", "matrix is not symmetric"));
        }
        symmetrize(&mut covariance);
        let min_eig = linalg::min_eigenvalue(&covariance);
        if min_eig < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityBelief {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl SparsityBelief {
    pub fn new(xi: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if xi.len() != eta.len() {
            return Err(Error::dim("sparsity eta", xi.len(), eta.len()));
        }
        if xi.iter().chain(eta.iter()).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("xi/eta", "Beta shape parameters must be positive"));
        }
        Ok(Self { xi, eta })
    }

    /// Uniform Beta(1, 1) belief on every coefficient.
    pub fn uninformative(p: usize) -> Self {
        Self {
            xi: vec![1.0; p],
            eta: vec![1.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        self.xi.iter().zip(&self.eta).map(|(x, e)| x / (x + e)).collect()
    }

    /// The pattern obtained by thresholding inclusion probabilities at 1/2
    /// (ties are included).
    pub fn map_pattern(&self) -> Vec<bool> {
        self.xi.iter().zip(&self.eta).map(|(x, e)| x >= e).collect()
    }
}

/// A candidate support of the coefficient vector with its mixture weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityPattern {
    pub mask: Vec<bool>,
    pub weight: f64,
}

impl SparsityPattern {
    pub fn all_true(p: usize) -> Self {
        Self {
            mask: vec![true; p],
            weight: 1.0,
        }
    }

    pub fn support(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub alternative: usize,
    pub value: f64,
    pub noise_sd: f64,
}

impl Observation {
    pub fn new(alternative: usize, value: f64, noise_sd: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("value", "observation must be finite"));
        }
        if !(noise_sd.is_finite() && noise_sd > 0.0) {
            return Err(Error::invalid("noise_sd", "noise standard deviation must be positive"));
        }
        Ok(Self {
            alternative,
            value,
            noise_sd,
        })
    }
}

/// Full belief: Gaussian coefficients, sparsity, the basis mapping
/// coefficients to alternatives, and per-alternative measurement noise.
#[derive(Clone, Debug)]
pub struct BeliefState {
    pub gaussian: GaussianBelief,
    pub sparsity: SparsityBelief,
    pub basis: Arc<BasisMatrix>,
    pub noise_sd: Vec<f64>,
}

impl BeliefState {
    pub fn new(
        gaussian: GaussianBelief,
        sparsity: SparsityBelief,
        basis: Arc<BasisMatrix>,
        noise_sd: Vec<f64>,
    ) -> Result<Self> {
        let p = gaussian.dim();
        if sparsity.len() != p {
            return Err(Error::dim("sparsity length", p, sparsity.len()));
        }
        if basis.num_coefficients() != p {
            return Err(Error::dim("basis columns", p, basis.num_coefficients()));
        }
        if noise_sd.len() != basis.num_alternatives() {
            return Err(Error::dim("noise_sd length", basis.num_alternatives(), noise_sd.len()));
        }
        if noise_sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("noise_sd", "measurement noise must be positive"));
        }
        Ok(Self {
            gaussian,
            sparsity,
            basis,
            noise_sd,
        })
    }

    pub fn num_coefficients(&self) -> usize {
        self.gaussian.dim()
    }

    pub fn num_alternatives(&self) -> usize {
        self.basis.num_alternatives()
    }

    /// Same coefficient belief viewed through a different set of alternatives.
    pub fn with_basis(&self, basis: Arc<BasisMatrix>, noise_sd: Vec<f64>) -> Result<Self> {
        Self::new(self.gaussian.clone(), self.sparsity.clone(), basis, noise_sd)
    }

    /// Posterior coefficient estimate: the Gaussian mean with coefficients
    /// outside the MAP sparsity pattern set to zero.
    pub fn sparse_estimate(&self) -> DVector<f64> {
        let mask = self.sparsity.map_pattern();
        DVector::from_iterator(
            self.num_coefficients(),
            self.gaussian
                .mean
                .iter()
                .zip(&mask)
                .map(|(&m, &keep)| if keep { m } else { 0.0 }),
        )
    }

    pub fn snapshot(&self) -> BeliefSnapshot {
        BeliefSnapshot::from_parts(&self.gaussian, &self.sparsity)
    }
}

/// Serialized form of the coefficient belief.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub theta: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub p: usize,
}

impl BeliefSnapshot {
    pub fn from_parts(gaussian: &GaussianBelief, sparsity: &SparsityBelief) -> Self {
        Self {
            theta: gaussian.mean.iter().copied().collect(),
            sigma: linalg::to_rows(&gaussian.covariance),
            xi: sparsity.xi.clone(),
            eta: sparsity.eta.clone(),
            p: gaussian.dim(),
        }
    }

    pub fn to_parts(&self) -> Result<(GaussianBelief, SparsityBelief)> {
        let p = self.p;
        if self.theta.len() != p {
            return Err(Error::dim("snapshot theta", p, self.theta.len()));
        }
        let sigma = linalg::from_rows(&self.sigma, p)
            .ok_or_else(|| Error::invalid("sigma", "ragged or mis-sized covariance rows"))?;
        if sigma.nrows() != p {
            return Err(Error::dim("snapshot sigma rows", p, sigma.nrows()));
        }
        let gaussian = GaussianBelief::new(DVector::from_vec(self.theta.clone()), sigma)?;
        let sparsity = SparsityBelief::new(self.xi.clone(), self.eta.clone())?;
        if sparsity.len() != p {
            return Err(Error::dim("snapshot xi", p, sparsity.len()));
        }
        Ok((gaussian, sparsity))
    }
}

/// Conjugate update of a lookup-table (alternative-space) normal belief
/// after one observation of a single alternative.
pub fn lookup_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    obs: &Observation,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = mean.len();
    if cov.nrows() != m || cov.ncols() != m {
        return Err(Error::dim("lookup covariance", m, cov.nrows()));
    }
    if obs.alternative >= m {
        return Err(Error::dim("observation alternative", m, obs.alternative));
    }
    let mut cov = cov.clone();
    symmetrize(&mut cov);
    let min_eig = linalg::min_eigenvalue(&cov);
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min_eig,
        });
    }
    let x = obs.alternative;
    let denom = obs.noise_sd * obs.noise_sd + cov[(x, x)];
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::DegenerateVariance(denom));
    }
    let col = cov.column(x).into_owned();
    let new_mean = mean + &col * ((obs.value - mean[x]) / denom);
    let mut new_cov = &cov - (&col * col.transpose()) / denom;
    symmetrize(&mut new_cov);
    Ok((new_mean, new_cov))
}

/// Covariance half of [`lookup_update`]; it does not depend on the observed value.
pub(crate) fn lookup_covariance_step(cov: &DMatrix<f64>, x: usize, noise_sd: f64) -> DMatrix<f64> {
    let denom = noise_sd * noise_sd + cov[(x, x)];
    if denom <= 0.0 {
        return cov.clone();
    }
    let col = cov.column(x).into_owned();
    let mut out = cov - (&col * col.transpose()) / denom;
    symmetrize(&mut out);
    out
}

/// Recursive least-squares update of the coefficient belief from one
/// observation `y = φᵀα + ε`.
pub fn rls_update(belief: &GaussianBelief, phi: &DVector<f64>, y: f64, noise_sd: f64) -> Result<GaussianBelief> {
    let p = belief.dim();
    if phi.len() != p {
        return Err(Error::dim("design row", p, phi.len()));
    }
    if !y.is_finite() {
        return Err(Error::invalid("value", "observation must be finite"));
    }
    let s = &belief.covariance * phi;
    let gamma = noise_sd * noise_sd + phi.dot(&s);
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::DegenerateVariance(gamma));
    }
    let residual = y - belief.mean.dot(phi);
    let mean = &belief.mean + &s * (residual / gamma);
    let mut covariance = &belief.covariance - (&s * s.transpose()) / gamma;
    symmetrize(&mut covariance);
    Ok(GaussianBelief { mean, covariance })
}

/// Batch form of [`rls_update`]: covariances advance decision by decision
/// (independent of the observed values), then the means are assembled once
/// all values are known.
pub fn batch_rls_update(
    belief: &GaussianBelief,
    rows: &[DVector<f64>],
    values: &[f64],
    noise_sds: &[f64],
) -> Result<GaussianBelief> {
    if rows.is_empty() {
        return Err(Error::invalid("rows", "batch must contain at least one observation"));
    }
    if values.len() != rows.len() {
        return Err(Error::dim("batch values", rows.len(), values.len()));
    }
    if noise_sds.len() != rows.len() {
        return Err(Error::dim("batch noise_sds", rows.len(), noise_sds.len()));
    }
    let p = belief.dim();

    // Pass 1: covariance chain Σ^{k,0}, Σ^{k,1}, ... with gains Σ^{k,j}φ_j / γ_j.
    let mut cov = belief.covariance.clone();
    let mut gains = Vec::with_capacity(rows.len());
    for (phi, &sd) in rows.iter().zip(noise_sds) {
        if phi.len() != p {
            return Err(Error::dim("design row", p, phi.len()));
        }
        let s = &cov * phi;
        let gamma = sd * sd + phi.dot(&s);
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::DegenerateVariance(gamma));
        }
        cov -= (&s * s.transpose()) / gamma;
        symmetrize(&mut cov);
        gains.push(s / gamma);
    }

    // Pass 2: means, with each residual taken against the mean that already
    // includes the earlier observations of the batch.
    let mut mean = belief.mean.clone();
    for ((phi, &y), gain) in rows.iter().zip(values).zip(&gains) {
        if !y.is_finite() {
            return Err(Error::invalid("value", "observation must be finite"));
        }
        let residual = y - mean.dot(phi);
        mean += gain * residual;
    }
    Ok(GaussianBelief { mean, covariance: cov })
}

/// Fuses a Lasso estimate, treated as a noisy sample of the active
/// coefficients, into the belief.
///
/// On the active set the result is the precision-weighted combination of the
/// current belief and the sample. Coordinates outside the active set move by
/// the matching Gaussian conditional, which keeps the joint covariance PSD.
/// Beta counts: `xi` gains one on the active set, `eta` gains one elsewhere.
pub fn fuse_lasso_sample(
    belief: &BeliefState,
    lasso_mean: &DVector<f64>,
    lasso_cov: &DMatrix<f64>,
    active_set: &[usize],
) -> Result<BeliefState> {
    let p = belief.num_coefficients();
    if lasso_mean.len() != p {
        return Err(Error::dim("lasso estimate", p, lasso_mean.len()));
    }
    let k = active_set.len();
    if lasso_cov.nrows() != k || lasso_cov.ncols() != k {
        return Err(Error::dim("lasso covariance", k, lasso_cov.nrows()));
    }
    let mut seen = HashSet::with_capacity(k);
    for &j in active_set {
        if j >= p {
            return Err(Error::dim("active index", p, j));
        }
        if !seen.insert(j) {
            return Err(Error::invalid("active_set", "duplicate index"));
        }
    }

    let mut sparsity = belief.sparsity.clone();
    for j in 0..p {
        if seen.contains(&j) {
            sparsity.xi[j] += 1.0;
        } else {
            sparsity.eta[j] += 1.0;
        }
    }

    let mut gaussian = belief.gaussian.clone();
    if k > 0 {
        let sigma = &belief.gaussian.covariance;
        let sigma_ss = linalg::select_square(sigma, active_set);
        let mut sample_cov = lasso_cov.clone();
        symmetrize(&mut sample_cov);
        let total = &sigma_ss + &sample_cov;
        let chol = total
            .cholesky()
            .ok_or_else(|| Error::Singular("prior and Lasso covariances sum to a singular matrix".into()))?;
        // Σ_{S,:}, p columns.
        let cross = DMatrix::from_fn(k, p, |r, c| sigma[(active_set[r], c)]);
        // Gainᵀ = (Σ_SS + Σ̂)⁻¹ Σ_{S,:}
        let gain_t = chol.solve(&cross);
        let innovation = DVector::from_iterator(k, active_set.iter().map(|&j| lasso_mean[j] - belief.gaussian.mean[j]));
        gaussian.mean += gain_t.transpose() * innovation;
        let mut cov = sigma - cross.transpose() * &gain_t;
        symmetrize(&mut cov);
        gaussian.covariance = cov;
    }

    Ok(BeliefState {
        gaussian,
        sparsity,
        basis: belief.basis.clone(),
        noise_sd: belief.noise_sd.clone(),
    })
}

fn log_pattern_probability(sparsity: &SparsityBelief, mask: &[bool]) -> f64 {
    sparsity
        .xi
        .iter()
        .zip(&sparsity.eta)
        .zip(mask)
        .map(|((x, e), &m)| if m { (x / (x + e)).ln() } else { (e / (x + e)).ln() })
        .sum()
}

/// Prior probability of a support pattern under independent Beta-Bernoulli beliefs.
pub fn pattern_probability(sparsity: &SparsityBelief, mask: &[bool]) -> Result<f64> {
    if mask.len() != sparsity.len() {
        return Err(Error::dim("pattern mask", sparsity.len(), mask.len()));
    }
    Ok(sparsity
        .xi
        .iter()
        .zip(&sparsity.eta)
        .zip(mask)
        .map(|((x, e), &m)| if m { x / (x + e) } else { e / (x + e) })
        .product())
}

/// Largest coefficient count for which exhaustive enumeration is attempted.
const MAX_EXHAUSTIVE_BITS: usize = 20;

/// Candidate support patterns with renormalized mixture weights.
///
/// When `max_patterns` covers every one of the `2^p` patterns they are all
/// enumerated. Otherwise the candidates are the MAP pattern, the optional
/// prior pattern, and independent Bernoulli draws (until `max_patterns`
/// distinct patterns or `50 * max_patterns` attempts); the top
/// `max_patterns` by probability are kept.
pub fn enumerate_patterns<R: Rng + ?Sized>(
    sparsity: &SparsityBelief,
    max_patterns: usize,
    prior_mask: Option<&[bool]>,
    rng: &mut R,
) -> Vec<SparsityPattern> {
    let max_patterns = max_patterns.max(1);
    let p = sparsity.len();

    let mut candidates: Vec<Vec<bool>> = Vec::new();
    if p <= MAX_EXHAUSTIVE_BITS && (1usize << p) <= max_patterns {
        for bits in 0..(1usize << p) {
            candidates.push((0..p).map(|j| bits >> j & 1 == 1).collect());
        }
    } else {
        let mut seen: HashSet<Vec<bool>> = HashSet::new();
        let mut push = |mask: Vec<bool>, out: &mut Vec<Vec<bool>>| {
            if seen.insert(mask.clone()) {
                out.push(mask);
            }
        };
        push(sparsity.map_pattern(), &mut candidates);
        if let Some(prior) = prior_mask {
            if prior.len() == p {
                push(prior.to_vec(), &mut candidates);
            }
        }
        let probs = sparsity.inclusion_probabilities();
        let mut attempts = 0;
        while candidates.len() < max_patterns && attempts < 50 * max_patterns {
            attempts += 1;
            let mask: Vec<bool> = probs.iter().map(|&q| rng.random::<f64>() < q).collect();
            push(mask, &mut candidates);
        }
    }

    let mut scored: Vec<(f64, Vec<bool>)> = candidates
        .into_iter()
        .map(|m| (log_pattern_probability(sparsity, &m), m))
        .collect();
    // Stable sort keeps insertion order among equal weights.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(max_patterns);

    let top = scored[0].0;
    let total: f64 = scored.iter().map(|(lw, _)| (lw - top).exp()).sum();
    scored
        .into_iter()
        .map(|(lw, mask)| SparsityPattern {
            mask,
            weight: (lw - top).exp() / total,
        })
        .collect()
}

/// Alternative-space mean `Φϑ + Φ₀` and covariance `ΦΣΦᵀ`, optionally
/// restricted to the columns selected by a pattern mask.
pub fn project_to_alternatives(belief: &BeliefState, mask: Option<&[bool]>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    project_gaussian(&belief.gaussian, &belief.basis, mask)
}

pub fn project_gaussian(
    gaussian: &GaussianBelief,
    basis: &BasisMatrix,
    mask: Option<&[bool]>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = gaussian.dim();
    if basis.num_coefficients() != p {
        return Err(Error::dim("basis columns", p, basis.num_coefficients()));
    }
    let support: Option<Vec<usize>> = match mask {
        Some(m) if m.len() != p => return Err(Error::dim("pattern mask", p, m.len())),
        Some(m) if m.iter().all(|&b| b) => None,
        Some(m) => Some(m.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()),
        None => None,
    };
    let (mean, mut cov) = match support {
        None => {
            let phi = &basis.rows;
            let mean = phi * &gaussian.mean + &basis.intercepts;
            let cov = phi * &gaussian.covariance * phi.transpose();
            (mean, cov)
        }
        Some(idx) => {
            let phi = linalg::select_columns(&basis.rows, &idx);
            let theta = linalg::select_vector(&gaussian.mean, &idx);
            let sigma = linalg::select_square(&gaussian.covariance, &idx);
            let mean = &phi * theta + &basis.intercepts;
            let cov = &phi * sigma * phi.transpose();
            (mean, cov)
        }
    };
    symmetrize(&mut cov);
    Ok((mean, cov))
}
