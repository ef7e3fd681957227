//! Structural-balance toolkit for imbalanced node classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] and [`dense`]: CSR adjacency, symmetric normalisation, sparse
//!   products, edge insertion and stochastic edge dropout.
//! * [`sbm`]: two-block stochastic block model generator and its degree
//!   statistics.
//! * [`theory`]: numerical witnesses for the structural-imbalance results
//!   (propagation matrix, path weights, gradient shares, tree decay).
//! * [`encoder`], [`enhance`]: the feature-view MLP and hard-sample mining with
//!   similarity-gated edge augmentation.
//! * [`diffusion`], [`classifier`]: K-step relation diffusion and the
//!   graph classification head, trained jointly.
//! * [`metrics`], [`data`], [`experiment`]: evaluation, dataset IO, split
//!   protocols and the multi-seed experiment driver.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod data;
pub mod dense;
pub mod diffusion;
pub mod encoder;
pub mod enhance;
mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod params_io;
pub mod sbm;
pub mod theory;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::{NormAdj, SparseGraph};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded RNG used throughout the crate; ChaCha keeps streams identical across platforms.
pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
