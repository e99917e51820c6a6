//! ℓ1-penalized least squares `½‖y − Xβ‖² + λ‖β‖₁`: full solves by
//! coordinate descent and exact one-observation homotopy updates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};

/// Tolerance of the KKT certificate attached to every returned state.
pub const KKT_TOLERANCE: f64 = 1e-6;

/// Default multiplier of the regularization schedule.
pub const DEFAULT_LAMBDA_SCALE: f64 = 0.5;

const MAX_SWEEPS: usize = 100_000;
const GAP_TOLERANCE: f64 = 1e-10;
/// Polished solutions are accepted below this violation.
const POLISH_TOLERANCE: f64 = 1e-9;
const RATE_EPS: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoState {
    /// n×p matrix of measured rows.
    pub design: DMatrix<f64>,
    pub responses: DVector<f64>,
    pub estimate: DVector<f64>,
    /// Sorted indices of the nonzero coefficients.
    pub active_set: Vec<usize>,
    /// Sign of each active coefficient, aligned with `active_set`.
    pub signs: Vec<f64>,
    pub lambda: f64,
}

impl LassoState {
    /// No data yet; the zero estimate is optimal for every λ.
    pub fn empty(p: usize, lambda: f64) -> Self {
        Self {
            design: DMatrix::zeros(0, p),
            responses: DVector::zeros(0),
            estimate: DVector::zeros(p),
            active_set: Vec::new(),
            signs: Vec::new(),
            lambda,
        }
    }

    pub fn num_coefficients(&self) -> usize {
        self.design.ncols()
    }

    pub fn num_observations(&self) -> usize {
        self.design.nrows()
    }

    pub fn kkt_violation(&self) -> f64 {
        kkt_violation(&self.design, &self.responses, &self.estimate, self.lambda)
    }

    fn from_estimate(design: DMatrix<f64>, responses: DVector<f64>, mut estimate: DVector<f64>, lambda: f64) -> Self {
        let mut active_set = Vec::new();
        let mut signs = Vec::new();
        for (j, b) in estimate.iter_mut().enumerate() {
            if *b != 0.0 {
                active_set.push(j);
                signs.push(b.signum());
            } else {
                *b = 0.0;
            }
        }
        Self {
            design,
            responses,
            estimate,
            active_set,
            signs,
            lambda,
        }
    }
}

/// Largest deviation from the optimality conditions: for active `j`,
/// `|c_j − λ sign β_j|`; for inactive `j`, `max(0, |c_j| − λ)`, where
/// `c = Xᵀ(y − Xβ)`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let c = x.tr_mul(&(y - x * beta));
    c.iter()
        .zip(beta.iter())
        .map(|(&cj, &bj)| {
            if bj != 0.0 {
                (cj - lambda * bj.signum()).abs()
            } else {
                (cj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn validate(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dim("lasso responses", x.nrows(), y.len()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(
            "lambda",
            "regularization must be finite and nonnegative",
        ));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("design", "entries must be finite"));
    }
    Ok(())
}

/// Exact solve on the current support with the current signs; returns
/// `None` if the Gram block is singular or a sign flips.
fn polish(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() {
        return Some(beta.clone());
    }
    let xs = linalg::select_columns(x, &support);
    let gram = xs.tr_mul(&xs);
    let signs = DVector::from_iterator(support.len(), support.iter().map(|&j| beta[j].signum()));
    let rhs = xs.tr_mul(y) - signs.clone() * lambda;
    let sol = gram.cholesky()?.solve(&rhs);
    if sol
        .iter()
        .zip(signs.iter())
        .any(|(v, s)| v * s <= 0.0 || !v.is_finite())
    {
        return None;
    }
    let mut out = DVector::zeros(beta.len());
    for (k, &j) in support.iter().enumerate() {
        out[j] = sol[k];
    }
    Some(out)
}

fn coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let p = x.ncols();
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut beta = match warm {
        Some(w) if w.len() == p => w.clone(),
        _ => DVector::zeros(p),
    };
    for j in 0..p {
        if norms[j] == 0.0 {
            beta[j] = 0.0;
        }
    }
    let mut resid = y - x * &beta;
    let y_scale = y.norm_squared().max(1.0);

    let mut sweeps = 0;
    loop {
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let z = col.dot(&resid) + norms[j] * old;
            let new = soft_threshold(z, lambda) / norms[j];
            if new != old {
                resid.axpy(old - new, &col, 1.0);
                beta[j] = new;
            }
        }
        sweeps += 1;

        // Duality gap with the scaled residual as dual point.
        let corr = x.tr_mul(&resid);
        let cmax = linalg::inf_norm(&corr);
        let scale = if cmax > lambda && cmax > 0.0 {
            lambda / cmax
        } else {
            1.0
        };
        let primal = 0.5 * resid.norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
        let theta = &resid * scale;
        let dual = 0.5 * y.norm_squared() - 0.5 * (y - &theta).norm_squared();
        let gap = primal - dual;
        if gap <= GAP_TOLERANCE * y_scale || sweeps >= MAX_SWEEPS {
            // Recompute the residual to shed accumulated drift.
            resid = y - x * &beta;
            let kkt = kkt_violation(x, y, &beta, lambda);
            if kkt <= KKT_TOLERANCE * 0.1 || sweeps >= MAX_SWEEPS {
                return Ok(beta);
            }
        }
    }
}

fn finish(x: DMatrix<f64>, y: DVector<f64>, beta: DVector<f64>, lambda: f64) -> Result<LassoState> {
    let raw = kkt_violation(&x, &y, &beta, lambda);
    let best = match polish(&x, &y, &beta, lambda) {
        Some(b) if kkt_violation(&x, &y, &b, lambda) <= raw.max(POLISH_TOLERANCE) => b,
        _ => beta,
    };
    let violation = kkt_violation(&x, &y, &best, lambda);
    if violation > KKT_TOLERANCE {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            violation,
        });
    }
    Ok(LassoState::from_estimate(x, y, best, lambda))
}

/// Full solve by cyclic coordinate descent, stopped on the duality gap and
/// then polished by an exact solve on the recovered support.
pub fn lasso_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoState> {
    lasso_solve_warm(x, y, lambda, None)
}

pub fn lasso_solve_warm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&DVector<f64>>,
) -> Result<LassoState> {
    validate(x, y, lambda)?;
    if x.nrows() == 0 {
        return Err(Error::invalid("design", "at least one observation is required"));
    }
    let beta = coordinate_descent(x, y, lambda, warm)?;
    match finish(x.clone(), y.clone(), beta, lambda) {
        Err(Error::NoConvergence { .. }) if warm.is_some() => {
            let beta = coordinate_descent(x, y, lambda, None)?;
            finish(x.clone(), y.clone(), beta, lambda)
        }
        r => r,
    }
}

/// Result of [`homotopy_update`].
#[derive(Clone, Debug, PartialEq)]
pub struct HomotopyOutcome {
    pub state: LassoState,
    /// Active-set changes along the path.
    pub events: usize,
    /// Set when the path broke down and a full solve was used instead.
    pub fell_back: bool,
}

struct Breakdown;

fn active_gram(x: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    let xs = linalg::select_columns(x, support);
    xs.tr_mul(&xs)
}

/// Pivot ratio below which an active Gram block counts as singular.
const PIVOT_RATIO: f64 = 1e-7;

/// Cholesky solve that treats numerically singular blocks as a breakdown;
/// collinear active columns make the path direction undefined.
fn solve_active(gram: DMatrix<f64>, rhs: &DVector<f64>) -> std::result::Result<DVector<f64>, Breakdown> {
    let ch = gram.cholesky().ok_or(Breakdown)?;
    let l = ch.l_dirty();
    let diag = (0..l.nrows()).map(|i| l[(i, i)].abs());
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(lo > PIVOT_RATIO * hi) {
        return Err(Breakdown);
    }
    let sol = ch.solve(rhs);
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Breakdown)
    }
}

enum Event {
    Leave(usize),
    Enter(usize, f64),
}

/// First event in `(0, limit)` along a linear path where active coefficients
/// move at `d` per unit and inactive correlations at `rate` per unit, with the
/// threshold moving at `lambda_rate`.
#[allow(clippy::too_many_arguments)]
fn first_event(
    beta: &DVector<f64>,
    support: &[usize],
    d: &DVector<f64>,
    c: &DVector<f64>,
    rate: &DVector<f64>,
    lambda: f64,
    lambda_rate: f64,
    limit: f64,
    skip: Option<usize>,
) -> Option<(f64, Event)> {
    let mut best: Option<(f64, Event)> = None;
    let mut consider = |t: f64, ev: Event| {
        if t.is_finite() && t >= 0.0 && t < limit && best.as_ref().is_none_or(|(b, _)| t < *b) {
            best = Some((t, ev));
        }
    };
    for (k, &j) in support.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        // β_j + t d_k = 0 with t > 0 requires opposite signs.
        if d[k] * beta[j] < 0.0 && d[k].abs() > RATE_EPS {
            consider(-beta[j] / d[k], Event::Leave(j));
        }
    }
    for j in 0..c.len() {
        if beta[j] != 0.0 || Some(j) == skip {
            continue;
        }
        // c_j − λ hits zero from below.
        let up = rate[j] - lambda_rate;
        if up > RATE_EPS {
            consider((lambda - c[j]).max(0.0) / up, Event::Enter(j, 1.0));
        }
        // −c_j − λ hits zero from below.
        let down = -rate[j] - lambda_rate;
        if down > RATE_EPS {
            consider((lambda + c[j]).max(0.0) / down, Event::Enter(j, -1.0));
        }
    }
    best
}

fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    (0..beta.len()).filter(|&j| beta[j] != 0.0).collect()
}

fn apply_event(beta: &mut DVector<f64>, ev: &Event) -> usize {
    match *ev {
        Event::Leave(j) => {
            beta[j] = 0.0;
            j
        }
        Event::Enter(j, sign) => {
            // Seed with a signed zero-magnitude marker; the next segment moves it.
            beta[j] = sign * f64::MIN_POSITIVE;
            j
        }
    }
}

/// Phase 1: weight the new row from 0 to 1 at fixed λ.
fn add_row_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
    e: f64,
    lambda: f64,
    beta: &mut DVector<f64>,
    cap: usize,
) -> std::result::Result<usize, Breakdown> {
    let mut mu0 = 0.0;
    let mut events = 0;
    let mut skip = None;
    loop {
        let support = support_of(beta);
        let e0 = e - u.dot(beta);
        let c = x.tr_mul(&(y - x * &*beta)) + u * (mu0 * e0);
        let delta_end = 1.0 - mu0;
        if delta_end <= 0.0 {
            return Ok(events);
        }

        let (d, k0) = if support.is_empty() {
            (DVector::zeros(0), 0.0)
        } else {
            let us = linalg::select_vector(u, &support);
            let a0 = active_gram(x, &support) + &us * us.transpose() * mu0;
            let w = solve_active(a0, &us)?;
            let k0 = us.dot(&w);
            (w * e0, k0)
        };
        let g_end = delta_end / (1.0 + delta_end * k0);

        // Inactive correlation rates per unit g.
        let xd = if support.is_empty() {
            DVector::zeros(x.nrows())
        } else {
            linalg::select_columns(x, &support) * &d
        };
        let rate = -x.tr_mul(&xd) + u * (e0 * (1.0 - mu0 * k0));

        match first_event(beta, &support, &d, &c, &rate, lambda, 0.0, g_end, skip) {
            None => {
                for (k, &j) in support.iter().enumerate() {
                    beta[j] += g_end * d[k];
                }
                return Ok(events);
            }
            Some((g, ev)) => {
                for (k, &j) in support.iter().enumerate() {
                    beta[j] += g * d[k];
                }
                skip = Some(apply_event(beta, &ev));
                mu0 += g / (1.0 - g * k0);
                events += 1;
                if events > cap {
                    return Err(Breakdown);
                }
            }
        }
    }
}

/// Phase 2: move λ from `lambda` to `target` on fixed data.
fn lambda_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mut lambda: f64,
    target: f64,
    beta: &mut DVector<f64>,
    cap: usize,
) -> std::result::Result<usize, Breakdown> {
    let mut events = 0;
    let mut skip = None;
    loop {
        let remaining = target - lambda;
        if remaining == 0.0 {
            return Ok(events);
        }
        let dir = remaining.signum();
        let support = support_of(beta);
        let c = x.tr_mul(&(y - x * &*beta));
        // Per unit |Δλ|: β_S moves by −dir G_SS⁻¹ s.
        let d = if support.is_empty() {
            DVector::zeros(0)
        } else {
            let s = DVector::from_iterator(support.len(), support.iter().map(|&j| beta[j].signum()));
            -solve_active(active_gram(x, &support), &s)? * dir
        };
        let xd = if support.is_empty() {
            DVector::zeros(x.nrows())
        } else {
            linalg::select_columns(x, &support) * &d
        };
        let rate = -x.tr_mul(&xd);

        match first_event(beta, &support, &d, &c, &rate, lambda, dir, remaining.abs(), skip) {
            None => {
                for (k, &j) in support.iter().enumerate() {
                    beta[j] += remaining.abs() * d[k];
                }
                return Ok(events);
            }
            Some((t, ev)) => {
                for (k, &j) in support.iter().enumerate() {
                    beta[j] += t * d[k];
                }
                lambda += dir * t;
                skip = Some(apply_event(beta, &ev));
                events += 1;
                if events > cap {
                    return Err(Breakdown);
                }
            }
        }
    }
}

/// Exact update of the Lasso solution after one more observation
/// `(row, value)` and a change of λ to `lambda_next`.
///
/// The new row is first brought in at the current λ, then λ moves to its
/// new value; both are piecewise-linear paths followed through active-set
/// changes. If the path breaks down (singular active Gram block, runaway
/// event count, failed certificate) the result comes from a warm-started
/// full solve and `fell_back` is set.
pub fn homotopy_update(
    state: &LassoState,
    row: &DVector<f64>,
    value: f64,
    lambda_next: f64,
) -> Result<HomotopyOutcome> {
    let p = state.num_coefficients();
    if row.len() != p {
        return Err(Error::dim("design row", p, row.len()));
    }
    if !value.is_finite() || row.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("observation", "entries must be finite"));
    }
    if !(lambda_next.is_finite() && lambda_next >= 0.0) {
        return Err(Error::invalid(
            "lambda",
            "regularization must be finite and nonnegative",
        ));
    }

    let x = &state.design;
    let y = &state.responses;
    let n = x.nrows();
    let mut xa = x.clone().insert_row(n, 0.0);
    xa.row_mut(n).copy_from(&row.transpose());
    let ya = y.clone().insert_row(n, value);

    let cap = 50 + 10 * p;
    let mut beta = state.estimate.clone();
    let path = add_row_path(x, y, row, value, state.lambda, &mut beta, cap)
        .and_then(|ev1| Ok(ev1 + lambda_path(&xa, &ya, state.lambda, lambda_next, &mut beta, cap)?));

    if let Ok(events) = path {
        if let Some(polished) = polish(&xa, &ya, &beta, lambda_next) {
            if kkt_violation(&xa, &ya, &polished, lambda_next) <= POLISH_TOLERANCE {
                return Ok(HomotopyOutcome {
                    state: LassoState::from_estimate(xa, ya, polished, lambda_next),
                    events,
                    fell_back: false,
                });
            }
        }
    }
    log::debug!("homotopy path broke down; falling back to a full solve");
    let state = lasso_solve_warm(&xa, &ya, lambda_next, Some(&state.estimate))?;
    Ok(HomotopyOutcome {
        state,
        events: 0,
        fell_back: true,
    })
}

/// `σ² (X_SᵀX_S + εI)⁻¹` with `ε = 1e-8 · trace(X_SᵀX_S) / |S|`.
pub fn covariance_estimate(state: &LassoState, noise_sd: f64) -> Result<DMatrix<f64>> {
    let k = state.active_set.len();
    if k == 0 {
        return Err(Error::invalid(
            "active_set",
            "covariance estimate needs a nonempty active set",
        ));
    }
    let mut gram = active_gram(&state.design, &state.active_set);
    let mut eps = 1e-8 * gram.trace() / k as f64;
    if eps <= 0.0 {
        eps = 1e-8;
    }
    for i in 0..k {
        gram[(i, i)] += eps;
    }
    let inv = match gram.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => gram
            .try_inverse()
            .ok_or_else(|| Error::Singular("active-set Gram matrix".into()))?,
    };
    let mut cov = inv * (noise_sd * noise_sd);
    symmetrize(&mut cov);
    Ok(cov)
}

/// `c σ sqrt(2 ln p / (n + 1))`.
pub fn lambda_schedule(n: usize, p: usize, noise_sd: f64, scale: f64) -> f64 {
    scale * noise_sd * (2.0 * (p.max(1) as f64).ln() / (n as f64 + 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_soft_thresholds() {
        let s = lasso_solve(&DMatrix::identity(2, 2), &DVector::from_vec(vec![3.0, 0.5]), 1.0).unwrap();
        assert_eq!(s.estimate, DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(s.active_set, vec![0]);
        assert_eq!(s.signs, vec![1.0]);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let lmax = linalg::inf_norm(&x.tr_mul(&y));
        let s = lasso_solve(&x, &y, lmax).unwrap();
        assert!(s.active_set.is_empty());
        assert_eq!(s.estimate, DVector::zeros(2));
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.9, 5.2, 6.8]);
        let ols = (x.tr_mul(&x)).try_inverse().unwrap() * x.tr_mul(&y);
        let s = lasso_solve(&x, &y, 0.0).unwrap();
        assert!((s.estimate - ols).amax() < 1e-10);
    }

    #[test]
    fn zero_row_leaves_estimate_unchanged() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let s = lasso_solve(&x, &y, 0.3).unwrap();
        let out = homotopy_update(&s, &DVector::zeros(2), 5.0, 0.3).unwrap();
        assert!((&out.state.estimate - &s.estimate).amax() < 1e-12);
        assert_eq!(out.state.num_observations(), 4);
    }

    #[test]
    fn update_from_empty_state() {
        let s = LassoState::empty(2, 1.0);
        let out = homotopy_update(&s, &DVector::from_vec(vec![1.0, 0.0]), 3.0, 1.0).unwrap();
        assert!((out.state.estimate[0] - 2.0).abs() < 1e-12);
        assert_eq!(out.state.active_set, vec![0]);
    }

    #[test]
    fn covariance_identity_gram() {
        let mut s = LassoState::empty(2, 0.0);
        s.design = DMatrix::identity(2, 2);
        s.responses = DVector::from_vec(vec![1.0, 1.0]);
        s.estimate = DVector::from_vec(vec![1.0, 1.0]);
        s.active_set = vec![0, 1];
        s.signs = vec![1.0, 1.0];
        let c = covariance_estimate(&s, 2.0).unwrap();
        assert!((c - DMatrix::identity(2, 2) * 4.0).amax() < 1e-6);
        s.active_set.clear();
        assert!(covariance_estimate(&s, 1.0).is_err());
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lambda_schedule(1, 1, 1.0, 1.0), 0.0);
        assert!((lambda_schedule(1, 7, 1.0, 1.0) - (7f64.ln()).sqrt()).abs() < 1e-15);
        assert!(lambda_schedule(5, 60, 2.0, 0.5) == 2.0 * lambda_schedule(5, 60, 1.0, 0.5));
        assert!(lambda_schedule(6, 60, 1.0, 0.5) < lambda_schedule(5, 60, 1.0, 0.5));
    }
}
