//! Two-block stochastic block model with a majority and a minority class.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::graph::{build_graph, SparseGraph};
use crate::{rng_from_seed, DenseMatrix, Error, Result};

/// Label of majority-block nodes (`0..n1`).
pub const MAJORITY: usize = 0;
/// Label of minority-block nodes (`n1..n1+n2`).
pub const MINORITY: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SbmConfig {
    /// Majority block size.
    pub n1: usize,
    /// Minority block size.
    pub n2: usize,
    /// Intra-block edge probability.
    pub p: f64,
    /// Inter-block edge probability.
    pub q: f64,
}

impl SbmConfig {
    pub fn new(n1: usize, n2: usize, p: f64, q: f64) -> Result<Self> {
        let cfg = Self { n1, n2, p, q };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n2 == 0 || self.n1 < self.n2 {
            return Err(Error::InvalidParameter(format!(
                "need n1 >= n2 >= 1, got n1={} n2={}",
                self.n1, self.n2
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0 && self.q >= 0.0 && self.q <= self.p) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= q <= p <= 1 and p > 0, got p={} q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    /// Imbalance ratio `n1 / n2`.
    pub fn beta(&self) -> f64 {
        self.n1 as f64 / self.n2 as f64
    }
}

/// Expected `(minority, majority)` degrees, counting every node of each block
/// as a potential neighbour: `d_mi = n2·p + n1·q`, `d_ma = n1·p + n2·q`.
pub fn expected_degrees(cfg: &SbmConfig) -> (f64, f64) {
    let (n1, n2) = (cfg.n1 as f64, cfg.n2 as f64);
    (n2 * cfg.p + n1 * cfg.q, n1 * cfg.p + n2 * cfg.q)
}

/// Exact expected degrees of the simple graph produced by [`generate_sbm`],
/// which has no self-pairs: `(n2−1)·p + n1·q` and `(n1−1)·p + n2·q`.
pub fn expected_degrees_simple(cfg: &SbmConfig) -> (f64, f64) {
    let (n1, n2) = (cfg.n1 as f64, cfg.n2 as f64);
    (
        (n2 - 1.0) * cfg.p + n1 * cfg.q,
        (n1 - 1.0) * cfg.p + n2 * cfg.q,
    )
}

/// Degree disparity `τ = (q + pβ) / (p + qβ)`.
pub fn degree_disparity(cfg: &SbmConfig) -> f64 {
    let beta = cfg.beta();
    (cfg.q + cfg.p * beta) / (cfg.p + cfg.q * beta)
}

/// Samples a simple undirected SBM graph. Nodes `0..n1` are labelled
/// [`MAJORITY`], the rest [`MINORITY`]. Every unordered pair is an
/// independent Bernoulli draw; geometric skipping keeps the cost at
/// `O(n + |E|)`.
pub fn generate_sbm(cfg: &SbmConfig, seed: u64) -> Result<(SparseGraph, Vec<usize>)> {
    cfg.validate()?;
    let n = cfg.n();
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        let boundary = cfg.n1.max(i + 1);
        if i < cfg.n1 {
            sample_segment(&mut rng, i + 1, boundary, cfg.p, |j| edges.push((i, j)));
            sample_segment(&mut rng, boundary, n, cfg.q, |j| edges.push((i, j)));
        } else {
            sample_segment(&mut rng, i + 1, n, cfg.p, |j| edges.push((i, j)));
        }
    }
    let labels = (0..n)
        .map(|i| if i < cfg.n1 { MAJORITY } else { MINORITY })
        .collect();
    Ok((build_graph(&edges, n)?, labels))
}

/// Calls `hit` for each index in `start..end` kept with probability `prob`.
fn sample_segment(rng: &mut impl Rng, start: usize, end: usize, prob: f64, mut hit: impl FnMut(usize)) {
    if start >= end || prob <= 0.0 {
        return;
    }
    if prob >= 1.0 {
        (start..end).for_each(hit);
        return;
    }
    let log_q = (1.0 - prob).ln();
    let mut j = start;
    loop {
        // 1 - U lies in (0, 1], so the log is finite.
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (end - j) as f64 {
            break;
        }
        j += skip as usize;
        hit(j);
        j += 1;
        if j >= end {
            break;
        }
    }
}

/// Isotropic unit-variance Gaussian features with class `c` centred at
/// `c · centroid_distance · u`, `u = (1, …, 1)/√dim`, so consecutive class
/// centroids are exactly `centroid_distance` apart.
pub fn class_conditional_features(
    labels: &[usize],
    dim: usize,
    centroid_distance: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("feature dimension must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let shift = centroid_distance / (dim as f64).sqrt();
    let mut data = Vec::with_capacity(labels.len() * dim);
    for &c in labels {
        for _ in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z + c as f64 * shift);
        }
    }
    DenseMatrix::from_vec(labels.len(), dim, data)
}
