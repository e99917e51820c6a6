//! Greedy batch selection with Monte Carlo knowledge-gradient estimates.
//!
//! Every batch step after the first estimates, for each candidate, the value
//! of the outcomes of all decisions so far plus that candidate. All
//! candidates and all sparsity scenarios share the same normal draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_pattern_weights, kg_lookup, sigma_tilde, spkg_scores};
use crate::belief::{lookup_covariance_step, project_gaussian, BeliefState, SparsityPattern};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub score: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchDecision {
    pub alternatives: Vec<usize>,
    /// Score of each pick when it was made (exact for the first, Monte Carlo after).
    pub per_step_scores: Vec<f64>,
    /// Zero for the first pick.
    pub mc_standard_errors: Vec<f64>,
    /// Value of every candidate at each step.
    #[serde(default)]
    pub step_values: Vec<Vec<f64>>,
}

/// A weighted normal belief on the alternatives, advanced through the batch.
struct Scenario {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    history: Vec<DVector<f64>>,
}

impl Scenario {
    fn commit(&mut self, x: usize, noise_sd: f64) -> Result<()> {
        self.history.push(sigma_tilde(&self.cov, x, noise_sd)?);
        self.cov = lookup_covariance_step(&self.cov, x, noise_sd);
        Ok(())
    }
}

/// `q × cols` standard normals, row-major.
fn draw_normals<R: Rng + ?Sized>(q: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(q, cols);
    for r in 0..q {
        for c in 0..cols {
            z[(r, c)] = rng.sample(StandardNormal);
        }
    }
    z
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NEG_INFINITY, f64::max)
}

/// Per-sample improvement `max(base_q + σ̃ z_q) − max θ` for every candidate,
/// as an `M × Q` table.
fn scenario_samples(sc: &Scenario, z: &DMatrix<f64>, noise_sds: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = sc.mean.len();
    let q = z.nrows();
    let step = sc.history.len();
    let last = z.column(step);

    // base = θ 1ᵀ + H Z_{:, ..step}ᵀ, one column per sample.
    let mut base = DMatrix::from_fn(m, q, |i, _| sc.mean[i]);
    if step > 0 {
        let h = DMatrix::from_columns(&sc.history);
        base.gemm(1.0, &h, &z.columns(0, step).transpose(), 1.0);
    }
    let top = max_of(sc.mean.iter().copied());

    let sigmas: Vec<DVector<f64>> = (0..m)
        .map(|x| sigma_tilde(&sc.cov, x, noise_sds[x]))
        .collect::<Result<_>>()?;
    Ok(sigmas
        .par_iter()
        .map(|s| {
            (0..q)
                .map(|r| {
                    let zr = last[r];
                    let col = base.column(r);
                    max_of(col.iter().zip(s.iter()).map(|(b, si)| b + si * zr)) - top
                })
                .collect()
        })
        .collect())
}

fn mean_and_se(samples: &[f64]) -> McEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let standard_error = if samples.len() > 1 {
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    McEstimate {
        score: mean,
        standard_error,
    }
}

/// Weighted Monte Carlo value of every candidate over all scenarios.
fn estimate_candidates(scenarios: &[Scenario], z: &DMatrix<f64>, noise_sds: &[f64]) -> Result<Vec<McEstimate>> {
    let m = noise_sds.len();
    let q = z.nrows();
    let mut acc = vec![vec![0.0; q]; m];
    for sc in scenarios {
        let samples = scenario_samples(sc, z, noise_sds)?;
        for (a, s) in acc.iter_mut().zip(samples) {
            for (ai, si) in a.iter_mut().zip(s) {
                *ai += sc.weight * si;
            }
        }
    }
    Ok(acc.iter().map(|a| mean_and_se(a)).collect())
}

fn check_mc(q: usize) -> Result<()> {
    if q == 0 {
        return Err(Error::invalid(
            "mc_samples",
            "at least one Monte Carlo sample is required",
        ));
    }
    Ok(())
}

/// Monte Carlo knowledge gradient of `candidate` given the `σ̃` vectors of
/// the decisions already made in the batch. Returns the sample mean of
/// `max(θ + Σ_j σ̃ʲ Zⱼ + σ̃ Z) − max θ` and its standard error.
pub fn mc_kg<R: Rng + ?Sized>(
    context: &[DVector<f64>],
    candidate: usize,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    noise_sds: &[f64],
    mc_samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_mc(mc_samples)?;
    let m = mean.len();
    if cov.nrows() != m || cov.ncols() != m {
        return Err(Error::dim("lookup covariance", m, cov.nrows()));
    }
    if noise_sds.len() != m {
        return Err(Error::dim("noise_sds", m, noise_sds.len()));
    }
    if candidate >= m {
        return Err(Error::dim("candidate index", m, candidate));
    }
    if let Some(bad) = context.iter().find(|s| s.len() != m) {
        return Err(Error::dim("batch context", m, bad.len()));
    }
    let sc = Scenario {
        weight: 1.0,
        mean: mean.clone(),
        cov: cov.clone(),
        history: context.to_vec(),
    };
    let z = draw_normals(mc_samples, context.len() + 1, rng);
    let s = sigma_tilde(cov, candidate, noise_sds[candidate])?;

    let mut base = DMatrix::from_fn(m, mc_samples, |i, _| mean[i]);
    if !context.is_empty() {
        let h = DMatrix::from_columns(&sc.history);
        base.gemm(1.0, &h, &z.columns(0, context.len()).transpose(), 1.0);
    }
    let top = max_of(mean.iter().copied());
    let last = z.column(context.len());
    let samples: Vec<f64> = (0..mc_samples)
        .map(|r| max_of(base.column(r).iter().zip(s.iter()).map(|(b, si)| b + si * last[r])) - top)
        .collect();
    Ok(mean_and_se(&samples))
}

fn greedy_batch<R: Rng + ?Sized>(
    mut scenarios: Vec<Scenario>,
    noise_sds: &[f64],
    first: usize,
    first_values: Vec<f64>,
    batch_size: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<BatchDecision> {
    let mut decision = BatchDecision {
        alternatives: vec![first],
        per_step_scores: vec![first_values[first]],
        mc_standard_errors: vec![0.0],
        step_values: vec![first_values],
    };
    if batch_size == 1 {
        return Ok(decision);
    }
    for sc in &mut scenarios {
        sc.commit(first, noise_sds[first])?;
    }
    for step in 1..batch_size {
        let z = draw_normals(mc_samples, step + 1, rng);
        let est = estimate_candidates(&scenarios, &z, noise_sds)?;
        let values: Vec<f64> = est.iter().map(|e| e.score).collect();
        let pick = linalg::argmax(&values);
        decision.alternatives.push(pick);
        decision.per_step_scores.push(est[pick].score);
        decision.mc_standard_errors.push(est[pick].standard_error);
        decision.step_values.push(values);
        if step + 1 < batch_size {
            for sc in &mut scenarios {
                sc.commit(pick, noise_sds[pick])?;
            }
        }
    }
    Ok(decision)
}

fn check_batch(batch_size: usize, mc_samples: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "batch size must be at least 1"));
    }
    if batch_size > 1 {
        check_mc(mc_samples)?;
    }
    Ok(())
}

/// Greedy batch of `batch_size` alternatives under a lookup-table belief.
/// The first pick is the exact knowledge-gradient argmax; later picks
/// maximize the Monte Carlo value given the earlier ones.
pub fn batch_kg_select<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    noise_sds: &[f64],
    batch_size: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<BatchDecision> {
    check_batch(batch_size, mc_samples)?;
    let first = kg_lookup(mean, cov, noise_sds)?;
    let scenarios = vec![Scenario {
        weight: 1.0,
        mean: mean.clone(),
        cov: cov.clone(),
        history: Vec::new(),
    }];
    greedy_batch(
        scenarios,
        noise_sds,
        first.argmax,
        first.scores,
        batch_size,
        mc_samples,
        rng,
    )
}

/// Sparse version of [`batch_kg_select`]: every sparsity pattern contributes
/// a weighted scenario, evaluated on the same draws.
pub fn batch_spkg_select<R: Rng + ?Sized>(
    belief: &BeliefState,
    patterns: &[SparsityPattern],
    batch_size: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<BatchDecision> {
    check_batch(batch_size, mc_samples)?;
    check_pattern_weights(patterns, belief.num_coefficients())?;
    let first = spkg_scores(belief, patterns)?;
    let mut scenarios = Vec::new();
    if batch_size > 1 {
        for pat in patterns.iter().filter(|p| p.weight > 0.0) {
            let (mean, cov) = project_gaussian(&belief.gaussian, &belief.basis, Some(&pat.mask))?;
            scenarios.push(Scenario {
                weight: pat.weight,
                mean,
                cov,
                history: Vec::new(),
            });
        }
    }
    greedy_batch(
        scenarios,
        &belief.noise_sd,
        first.argmax,
        first.scores,
        batch_size,
        mc_samples,
        rng,
    )
}

/// Uniformly random batch: without replacement when `batch_size ≤ M`,
/// with replacement otherwise.
pub fn exploration_select<R: Rng + ?Sized>(
    num_alternatives: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if num_alternatives == 0 {
        return Err(Error::invalid("alternatives", "no alternatives to choose from"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "batch size must be at least 1"));
    }
    if batch_size <= num_alternatives {
        Ok(rand::seq::index::sample(rng, num_alternatives, batch_size).into_vec())
    } else {
        Ok((0..batch_size).map(|_| rng.random_range(0..num_alternatives)).collect())
    }
}
