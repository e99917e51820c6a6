use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{filled_profile, FootprintingProfile};

/// How simulated true coefficient vectors are drawn around a base profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub base_profile: FootprintingProfile,
    pub perturb_ratio: f64,
    pub kappa_mean: f64,
    pub kappa_sd: f64,
    /// Inclusive range of right circular shifts.
    pub shift_range: (usize, usize),
}

impl TruthSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.base_profile.len();
        let (lo, hi) = self.shift_range;
        if lo > hi || hi > p {
            return Err(Error::invalid("shift_range", format!("must satisfy lo ≤ hi ≤ {p}")));
        }
        if !(self.perturb_ratio.is_finite() && self.perturb_ratio >= 0.0) {
            return Err(Error::invalid("perturb_ratio", "must be nonnegative"));
        }
        if !(self.kappa_sd.is_finite() && self.kappa_sd >= 0.0 && self.kappa_mean.is_finite()) {
            return Err(Error::invalid("kappa", "mean must be finite and sd nonnegative"));
        }
        Ok(())
    }
}

const KAPPA_FLOOR: f64 = 0.01;

/// Draws `κ ~ N(κ̄, sd²)` truncated to `κ > 0.01`, a Gaussian vector with mean
/// the base profile and covariance `r² ϑ̃_i ϑ̃_j e^{−κ|i−j|}`, shifts it right
/// circularly by a uniform draw from the shift range, and clamps negatives to 0.
pub fn sample_truth<R: Rng + ?Sized>(spec: &TruthSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let base = &spec.base_profile.values;
    let p = base.len();

    let mut kappa = spec.kappa_mean;
    if spec.kappa_sd > 0.0 {
        let dist = Normal::new(spec.kappa_mean, spec.kappa_sd).map_err(|e| Error::invalid("kappa", e.to_string()))?;
        kappa = f64::NAN;
        for _ in 0..10_000 {
            let k = dist.sample(rng);
            if k > KAPPA_FLOOR {
                kappa = k;
                break;
            }
        }
        if kappa.is_nan() {
            kappa = KAPPA_FLOOR;
        }
    }
    kappa = kappa.max(KAPPA_FLOOR);

    // The exponential kernel is the AR(1) correlation with ρ = e^{−κ}, so the
    // draw is a scaled stationary AR(1) path.
    let mut alpha = base.clone();
    if spec.perturb_ratio > 0.0 {
        let scale = filled_profile(&spec.base_profile);
        let rho = (-kappa).exp();
        let innov = (1.0 - rho * rho).sqrt();
        let mut x = 0.0;
        for i in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            x = if i == 0 { z } else { rho * x + innov * z };
            alpha[i] += spec.perturb_ratio * scale[i] * x;
        }
    }

    let shift = rng.random_range(spec.shift_range.0..=spec.shift_range.1) % p;
    alpha.rotate_right(shift);
    for a in &mut alpha {
        if *a < 0.0 {
            *a = 0.0;
        }
    }
    Ok(alpha)
}

/// `φᵀα + c + σ ε` for one measurement.
pub fn simulate_observation<R: Rng + ?Sized>(
    truth: &[f64],
    basis_row: &[f64],
    intercept: f64,
    noise_sd: f64,
    rng: &mut R,
) -> f64 {
    let mean: f64 = truth.iter().zip(basis_row).map(|(a, b)| a * b).sum::<f64>() + intercept;
    let z: f64 = rng.sample(StandardNormal);
    mean + noise_sd * z
}
