//! Sparse knowledge-gradient design of RNA footprinting experiments.
//!
//! The crate holds the numerical core: beliefs over per-nucleotide
//! coefficients, the Lasso and its online homotopy, knowledge-gradient
//! policies, the RNA probe domain, prior construction from footprinting
//! data, a simulation harness and the campaign state used by the service.

// `!(x > 0.0)` is how NaN is rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!(
            (a - b).abs() <= tol,
            "{} vs {} differ by {:e} (tol {:e})",
            a,
            b,
            (a - b).abs(),
            tol
        );
    }};
}

pub mod belief;
pub mod campaign;
pub mod error;
pub mod kg;
pub mod lasso;
pub mod linalg;
pub mod prior;
pub mod rna;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
