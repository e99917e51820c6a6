use crate::error::{Error, Result};
use crate::linalg;
use crate::sim::ScoreSnapshot;

/// `OC = μ* − μ(believed best)` and, when `μ* ≠ 0`, `OC% = OC / μ*`.
pub fn opportunity_cost(truth_values: &[f64], believed_best: usize) -> Result<(f64, Option<f64>)> {
    if truth_values.is_empty() {
        return Err(Error::invalid("truth_values", "library is empty"));
    }
    if believed_best >= truth_values.len() {
        return Err(Error::dim("believed best", truth_values.len(), believed_best));
    }
    let best = truth_values[linalg::argmax(truth_values)];
    let oc = best - truth_values[believed_best];
    let pct = (best != 0.0).then(|| oc / best);
    Ok((oc, pct))
}

/// `‖ϑ − α‖₂ / p`.
pub fn estimation_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let p = truth.len().max(1) as f64;
    estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / p
}

/// Counts measured alternatives whose score is lower on the following sweep.
///
/// Every pick of every sweep except the last is one comparison. Returns
/// `(drops, comparisons)`.
pub fn score_drops(trace: &[ScoreSnapshot]) -> (usize, usize) {
    let mut drops = 0;
    let mut total = 0;
    for w in trace.windows(2) {
        for &x in &w[0].picks {
            if let (Some(a), Some(b)) = (w[0].scores.get(x), w[1].scores.get(x)) {
                total += 1;
                drops += usize::from(b < a);
            }
        }
    }
    (drops, total)
}
