//! Exact expected maximum of a set of lines driven by one standard normal.

use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Normal loss function `f(z) = zΦ(z) + φ(z)`.
pub fn normal_loss(z: f64) -> f64 {
    z * normal_cdf(z) + normal_pdf(z)
}

/// `h(a, b) = E[max_i a_i + b_i Z] − max_i a_i` for `Z ~ N(0, 1)`.
///
/// Lines are sorted by slope, equal slopes keep only the largest intercept,
/// lines that never attain the maximum are dropped, and the expectation is
/// summed over the breakpoints of the upper envelope. `O(M log M)` after
/// sorting. Returns NaN when any input is non-finite.
pub fn h_function(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "h_function: length mismatch");
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    if a.len() <= 1 {
        return 0.0;
    }

    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(a[i].total_cmp(&a[j])));

    // Equal slopes: the last one in sorted order has the largest intercept.
    let mut lines: Vec<(f64, f64)> = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        if let Some(&next) = order.get(k + 1) {
            if b[next] == b[i] {
                continue;
            }
        }
        lines.push((a[i], b[i]));
    }

    // Upper envelope; `breaks[k]` is where envelope line k takes over from k-1.
    let mut env: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
    let mut breaks: Vec<f64> = Vec::with_capacity(lines.len());
    for (ai, bi) in lines {
        loop {
            match env.last() {
                None => {
                    env.push((ai, bi));
                    breaks.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&(aj, bj)) => {
                    let z = (aj - ai) / (bi - bj);
                    if z <= *breaks.last().expect("parallel to env") {
                        env.pop();
                        breaks.pop();
                    } else {
                        env.push((ai, bi));
                        breaks.push(z);
                        break;
                    }
                }
            }
        }
    }

    let mut total = 0.0;
    for k in 1..env.len() {
        total += (env[k].1 - env[k - 1].1) * normal_loss(-breaks[k].abs());
    }
    total.max(0.0)
}
