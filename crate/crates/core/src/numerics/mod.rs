//! Dense linear algebra used throughout the crate.

mod decomp;
mod rng;
mod svd;

use ndarray::{Array2, ArrayView2};

pub use decomp::{
    cholesky, orthonormalize_columns, spd_solve, spectral_norm_sym, symmetric_eigen,
    CholeskyFactor, EigenDecomposition,
};
pub use rng::{standard_normal, RandomSource};
pub use svd::{truncated_svd, TruncatedSvd};

/// Dense row-major matrix of `f64`.
pub type Matrix = Array2<f64>;

pub fn frobenius_norm(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn frobenius_sq(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + &a.t()) * 0.5
}
