//! Priors from an in vitro footprinting profile: mean, exponential-kernel
//! covariance and Beta frequency priors.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefSnapshot, GaussianBelief, SparsityBelief};
use crate::error::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 0.39728;
pub const DEFAULT_NOISE_RATIO: f64 = 0.2;
pub const DEFAULT_MAX_LAG: usize = 100;

/// Per-nucleotide accessibility from a footprinting experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootprintingProfile {
    pub values: Vec<f64>,
    pub source: String,
}

impl FootprintingProfile {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("profile", "profile is empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "profile",
                format!("value at position {} must be finite and nonnegative", i + 1),
            ));
        }
        Ok(Self {
            values,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn support(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0.0).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRecord {
    position: usize,
    value: f64,
}

/// Profile together with the positions that were missing from the file.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedProfile {
    pub profile: FootprintingProfile,
    pub gaps: Vec<usize>,
}

/// Reads a `position,value` CSV. Positions are 1-based; missing positions
/// up to the largest one are filled with zero and listed in `gaps`.
pub fn load_footprinting(path: &Path) -> Result<LoadedProfile> {
    let text = std::fs::read_to_string(path)?;
    parse_footprinting(&text, &path.display().to_string())
}

pub fn parse_footprinting(text: &str, source: &str) -> Result<LoadedProfile> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut by_pos = BTreeMap::new();
    for rec in rdr.deserialize() {
        let rec: ProfileRecord = rec?;
        if rec.position == 0 {
            return Err(Error::invalid("position", "positions are 1-based"));
        }
        if by_pos.insert(rec.position, rec.value).is_some() {
            return Err(Error::invalid(
                "position",
                format!("duplicate position {}", rec.position),
            ));
        }
    }
    let last = *by_pos
        .keys()
        .next_back()
        .ok_or_else(|| Error::invalid("profile", "footprinting file has no rows"))?;
    let mut values = Vec::with_capacity(last);
    let mut gaps = Vec::new();
    for pos in 1..=last {
        match by_pos.get(&pos) {
            Some(&v) => values.push(v),
            None => {
                values.push(0.0);
                gaps.push(pos);
            }
        }
    }
    Ok(LoadedProfile {
        profile: FootprintingProfile::new(values, source)?,
        gaps,
    })
}

pub fn write_footprinting(path: &Path, profile: &FootprintingProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, &value) in profile.values.iter().enumerate() {
        w.serialize(ProfileRecord { position: i + 1, value })?;
    }
    w.flush()?;
    Ok(())
}

/// Mean-centered sample autocorrelation for lags `0..=max_lag`, normalized
/// so that lag 0 is 1.
pub fn sample_autocorrelation(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if max_lag >= n {
        return Err(Error::invalid(
            "max_lag",
            format!("must be below the profile length {n}"),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::DegenerateVariance(c0));
    }
    Ok((0..=max_lag)
        .map(|k| centered.iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

fn decay_loss(acf: &[f64], kappa: f64) -> f64 {
    acf.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &r)| (r - (-kappa * k as f64).exp()).powi(2))
        .sum()
}

const KAPPA_MIN: f64 = 1e-6;
const KAPPA_MAX: f64 = 50.0;

/// Least-squares fit of `e^{−κ·lag}` to `acf[1..]` on the linear scale:
/// a log-spaced grid scan followed by golden-section refinement.
pub fn fit_exponential_decay(acf: &[f64]) -> Result<f64> {
    if acf.len() < 2 {
        return Err(Error::invalid("acf", "need at least one positive lag"));
    }
    let grid = 400;
    let (lmin, lmax) = (KAPPA_MIN.ln(), KAPPA_MAX.ln());
    let point = |i: usize| (lmin + (lmax - lmin) * i as f64 / grid as f64).exp();
    let best = (0..=grid)
        .min_by(|&a, &b| decay_loss(acf, point(a)).total_cmp(&decay_loss(acf, point(b))))
        .expect("nonempty grid");
    let mut lo = point(best.saturating_sub(1));
    let mut hi = point((best + 1).min(grid));

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (decay_loss(acf, a), decay_loss(acf, b));
    while hi - lo > 1e-12 * hi.max(1.0) {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = decay_loss(acf, a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = decay_loss(acf, b);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fitted decay rate and the autocorrelation it was fitted to.
pub fn fit_decay_rate(profile: &FootprintingProfile, max_lag: usize) -> Result<(f64, Vec<f64>)> {
    let acf = sample_autocorrelation(&profile.values, max_lag)?;
    Ok((fit_exponential_decay(&acf)?, acf))
}

/// Profile with zeros replaced by the mean of the full profile.
pub fn filled_profile(profile: &FootprintingProfile) -> Vec<f64> {
    let mean = profile.mean();
    profile
        .values
        .iter()
        .map(|&v| if v == 0.0 { mean } else { v })
        .collect()
}

/// `Σ_ij = r² ϑ̃_i ϑ̃_j exp(−κ|i−j|)`.
pub fn build_prior_covariance(profile: &FootprintingProfile, r: f64, kappa: f64) -> Result<DMatrix<f64>> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid("r", "noise ratio must be positive"));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::invalid("kappa", "decay rate must be positive"));
    }
    let t = filled_profile(profile);
    let p = t.len();
    let r2 = r * r;
    Ok(DMatrix::from_fn(p, p, |i, j| {
        r2 * (t[i] * t[j]) * (-kappa * (i as f64 - j as f64).abs()).exp()
    }))
}

/// Beta priors `(1 + w, 1)` where the profile is nonzero and `(1, 1 + w)`
/// elsewhere. Warns when `w` exceeds a supplied measurement budget.
pub fn build_frequency_priors(profile: &FootprintingProfile, w: f64, budget: Option<usize>) -> Result<SparsityBelief> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::invalid("w", "confidence weight must be nonnegative"));
    }
    if let Some(b) = budget {
        if w > b as f64 {
            log::warn!("confidence weight w = {w} exceeds the measurement budget {b}");
        }
    }
    let (xi, eta) = profile
        .values
        .iter()
        .map(|&v| if v != 0.0 { (1.0 + w, 1.0) } else { (1.0, 1.0 + w) })
        .unzip();
    SparsityBelief::new(xi, eta)
}

/// Everything needed to start a campaign or a simulation from a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorBundle {
    #[serde(flatten)]
    pub belief: BeliefSnapshot,
    pub kappa: f64,
    pub r: f64,
    pub w: f64,
}

impl PriorBundle {
    pub fn to_parts(&self) -> Result<(GaussianBelief, SparsityBelief)> {
        self.belief.to_parts()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorOptions {
    pub r: f64,
    /// Decay rate; fitted from the profile when `None`.
    pub kappa: Option<f64>,
    pub w: f64,
    pub max_lag: usize,
    pub budget: Option<usize>,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self {
            r: DEFAULT_NOISE_RATIO,
            kappa: None,
            w: 10.0,
            max_lag: DEFAULT_MAX_LAG,
            budget: None,
        }
    }
}

/// Full prior: mean = profile, covariance per [`build_prior_covariance`],
/// Beta priors per [`build_frequency_priors`].
pub fn build_prior(profile: &FootprintingProfile, opts: &PriorOptions) -> Result<PriorBundle> {
    let kappa = match opts.kappa {
        Some(k) => k,
        None => fit_decay_rate(profile, opts.max_lag.min(profile.len().saturating_sub(1)))?.0,
    };
    let cov = build_prior_covariance(profile, opts.r, kappa)?;
    let gaussian = GaussianBelief::new(DVector::from_vec(profile.values.clone()), cov)?;
    let sparsity = build_frequency_priors(profile, opts.w, opts.budget)?;
    Ok(PriorBundle {
        belief: BeliefSnapshot::from_parts(&gaussian, &sparsity),
        kappa,
        r: opts.r,
        w: opts.w,
    })
}
