//! Graph regularized PCA.
//!
//! Learns (or accepts) a sparse feature precision graph and fits a low-rank
//! factorization `X ≈ U·Vᵀ` whose loadings are sparse, degree-weighted and
//! smooth over the graph Laplacian. The crate also ships the synthetic
//! benchmark used to evaluate it: a graph-structured data generator, PCA and
//! sparse PCA baselines, subspace selectivity / alignment / reconstruction
//! metrics, and a seeded sweep harness.

pub mod error;
pub mod datagen;
pub mod graphs;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod precision;

pub use error::{Error, Result};
pub use numerics::{Matrix, RandomSource};
