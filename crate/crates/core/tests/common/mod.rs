#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use spkg_core::belief::{BeliefState, GaussianBelief, SparsityBelief};
use spkg_core::rna::BasisMatrix;

pub fn normal_vec<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn normal_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_iterator(r, c, (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `AAᵀ/p + floor·I`.
pub fn random_spd<R: Rng>(p: usize, floor: f64, rng: &mut R) -> DMatrix<f64> {
    let a = normal_mat(p, p, rng);
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * floor
}

pub fn random_gaussian<R: Rng>(p: usize, rng: &mut R) -> GaussianBelief {
    GaussianBelief::new(normal_vec(p, rng), random_spd(p, 0.1, rng)).unwrap()
}

/// Nonnegative basis with a few zeros per row, like probe footprints.
pub fn random_basis<R: Rng>(m: usize, p: usize, rng: &mut R) -> BasisMatrix {
    let rows = DMatrix::from_fn(m, p, |_, _| {
        if rng.random::<f64>() < 0.3 {
            0.0
        } else {
            rng.random_range(0.5..3.0)
        }
    });
    BasisMatrix::new(rows).unwrap()
}

pub fn random_sparsity<R: Rng>(p: usize, rng: &mut R) -> SparsityBelief {
    let xi = (0..p).map(|_| rng.random_range(0.5..6.0)).collect();
    let eta = (0..p).map(|_| rng.random_range(0.5..6.0)).collect();
    SparsityBelief::new(xi, eta).unwrap()
}

pub fn random_state<R: Rng>(m: usize, p: usize, rng: &mut R) -> BeliefState {
    let noise = (0..m).map(|_| rng.random_range(0.3..2.0)).collect();
    BeliefState::new(
        random_gaussian(p, rng),
        random_sparsity(p, rng),
        Arc::new(random_basis(m, p, rng)),
        noise,
    )
    .unwrap()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}
