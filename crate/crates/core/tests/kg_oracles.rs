mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::*;
use spkg_core::belief::{enumerate_patterns, project_gaussian, BeliefState, SparsityPattern};
use spkg_core::kg::{batch_kg_select, batch_spkg_select, h_function, kg_linear, kg_lookup, mc_kg, spkg_scores};
use spkg_core::rna::BasisMatrix;

/// Monte Carlo estimate of E max(a + bZ) − max a and its standard error.
fn mc_h(a: &[f64], b: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..samples {
        let z: f64 = rng.sample(StandardNormal);
        let v = a
            .iter()
            .zip(b)
            .map(|(x, y)| x + y * z)
            .fold(f64::NEG_INFINITY, f64::max)
            - top;
        sum += v;
        sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    (mean, ((sq / n - mean * mean).max(0.0) / n).sqrt())
}

#[test]
fn h_function_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let m = rng.random_range(1..=6);
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
        if m > 2 && rng.random::<f64>() < 0.3 {
            b[1] = b[0];
        }
        let exact = h_function(&a, &b);
        let (est, se) = mc_h(&a, &b, 100_000, &mut rng);
        assert!(
            (exact - est).abs() <= 4.0 * se + 1e-12,
            "a={a:?} b={b:?} exact={exact} mc={est} se={se}"
        );
    }
}

#[test]
fn identity_basis_reduces_to_lookup() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let p = rng.random_range(1..=8);
        let g = random_gaussian(p, &mut rng);
        let sds: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..2.0)).collect();
        let basis = BasisMatrix::new(DMatrix::identity(p, p)).unwrap();
        let lin = kg_linear(&g, &basis, &sds).unwrap();
        let look = kg_lookup(&g.mean, &g.covariance, &sds).unwrap();
        for (x, y) in lin.scores.iter().zip(&look.scores) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(lin.argmax, look.argmax);
    }
}

#[test]
fn single_full_pattern_reduces_to_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let p = rng.random_range(1..=8);
        let m = rng.random_range(1..=10);
        let s = random_state(m, p, &mut rng);
        let sp = spkg_scores(&s, &[SparsityPattern::all_true(p)]).unwrap();
        let lin = kg_linear(&s.gaussian, &s.basis, &s.noise_sd).unwrap();
        for (x, y) in sp.scores.iter().zip(&lin.scores) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(sp.argmax, lin.argmax);
    }
}

#[test]
fn unit_batch_reduces_to_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..50 {
        let p = rng.random_range(2..=8);
        let m = rng.random_range(2..=10);
        let s = random_state(m, p, &mut rng);
        let pats = enumerate_patterns(&s.sparsity, 5, None, &mut rng);
        let seq = spkg_scores(&s, &pats).unwrap();
        let batch = batch_spkg_select(&s, &pats, 1, 100, &mut rng).unwrap();
        assert_eq!(batch.alternatives, vec![seq.argmax]);
        for (x, y) in batch.step_values[0].iter().zip(&seq.scores) {
            assert!((x - y).abs() <= 1e-12);
        }

        let look = kg_lookup(&s.gaussian.mean, &s.gaussian.covariance, &vec![1.0; p]).unwrap();
        let bk = batch_kg_select(
            &s.gaussian.mean,
            &s.gaussian.covariance,
            &vec![1.0; p],
            1,
            100,
            &mut rng,
        )
        .unwrap();
        assert_eq!(bk.alternatives, vec![look.argmax]);
    }
}

#[test]
fn monte_carlo_kg_agrees_with_exact_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..20 {
        let m = rng.random_range(2..=6);
        let g = random_gaussian(m, &mut rng);
        let sds: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.5)).collect();
        let exact = kg_lookup(&g.mean, &g.covariance, &sds).unwrap();
        for x in 0..m {
            let est = mc_kg(&[], x, &g.mean, &g.covariance, &sds, 20_000, &mut rng).unwrap();
            assert!(
                (est.score - exact.scores[x]).abs() <= 4.0 * est.standard_error + 1e-9,
                "x={x} exact={} mc={} se={}",
                exact.scores[x],
                est.score,
                est.standard_error
            );
        }
    }
}

#[test]
fn measured_alternative_loses_value() {
    // After observing x, the same alternative is worth less to measure again.
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..50 {
        let m = rng.random_range(2..=6);
        let g = random_gaussian(m, &mut rng);
        let sds = vec![0.5; m];
        let before = kg_lookup(&g.mean, &g.covariance, &sds).unwrap();
        let x = before.argmax;
        let cov = {
            let c = g.covariance.column(x).into_owned();
            let d = sds[x] * sds[x] + g.covariance[(x, x)];
            &g.covariance - &c * c.transpose() / d
        };
        // Hold the mean fixed: the drop comes from the covariance alone.
        let after = kg_lookup(&g.mean, &cov, &sds).unwrap();
        assert!(after.scores[x] <= before.scores[x] + 1e-12);
    }
}

#[test]
fn spkg_is_weighted_sum_over_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let s = random_state(6, 5, &mut rng);
    let pats = enumerate_patterns(&s.sparsity, 4, None, &mut rng);
    let total = spkg_scores(&s, &pats).unwrap();
    let mut acc = [0.0; 6];
    for pat in &pats {
        let (mean, cov) = project_gaussian(&s.gaussian, &s.basis, Some(&pat.mask)).unwrap();
        let k = kg_lookup(&mean, &cov, &s.noise_sd).unwrap();
        for (a, v) in acc.iter_mut().zip(&k.scores) {
            *a += pat.weight * v;
        }
    }
    for (a, b) in acc.iter().zip(&total.scores) {
        assert!((a - b).abs() <= 1e-12 + 1e-12 * b.abs().max(1e-12) || (*a < 1e-12 && *b == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn h_is_nonnegative_and_shift_invariant(seed in any::<u64>(), m in 1usize..8, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = h_function(&a, &b);
        prop_assert!(h >= 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + shift).collect();
        prop_assert!((h_function(&shifted, &b) - h).abs() <= 1e-10);
        // Constant slopes carry no information.
        prop_assert_eq!(h_function(&a, &vec![0.7; m]), 0.0);
    }

    #[test]
    fn spkg_scores_are_nonnegative(seed in any::<u64>(), m in 1usize..8, p in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(m, p, &mut rng);
        let pats = enumerate_patterns(&s.sparsity, 6, None, &mut rng);
        let k = spkg_scores(&s, &pats).unwrap();
        prop_assert!(k.scores.iter().all(|v| *v >= 0.0));
        prop_assert!(k.scores[k.argmax] == k.max());
    }
}

#[test]
fn zero_variance_belief_has_no_value() {
    let p = 3;
    let s = BeliefState::new(
        spkg_core::belief::GaussianBelief::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), DMatrix::zeros(p, p)).unwrap(),
        spkg_core::belief::SparsityBelief::uninformative(p),
        Arc::new(BasisMatrix::new(DMatrix::identity(p, p)).unwrap()),
        vec![1.0; p],
    )
    .unwrap();
    let k = spkg_scores(&s, &[SparsityPattern::all_true(p)]).unwrap();
    assert!(k.scores.iter().all(|&v| v == 0.0));
    assert_eq!(k.argmax, 0);
}
