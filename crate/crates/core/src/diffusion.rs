//! K-step relation diffusion over a perturbed normalised adjacency.
//!
//! `Z⁰ = X·W`, `Z^(t) = αÃZ^(t−1) + (1−α)Z^(t−1)`, `H = dropout(relu(Z^K + b))`.
//! The bias is applied once, at the final step.

use rand::{Rng, RngCore};

use crate::dense::relu;
use crate::encoder::xavier_uniform;
use crate::graph::{normalize_sym, perturb_edges, spmm, NormAdj, SparseGraph};
use crate::{rng_from_seed, DenseMatrix, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionConfig {
    pub k: usize,
    pub alpha: f64,
    pub p_drop: f64,
    pub p_feat: f64,
    pub d_out: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 0.15,
            p_drop: 0.1,
            p_feat: 0.1,
            d_out: 64,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.p_drop) || !(0.0..1.0).contains(&self.p_feat) {
            return Err(Error::InvalidParameter(format!(
                "dropout rates must lie in [0, 1), got p_drop={} p_feat={}",
                self.p_drop, self.p_feat
            )));
        }
        if self.d_out == 0 {
            return Err(Error::InvalidParameter("d_out must be >= 1".into()));
        }
        Ok(())
    }

    /// Projection and finalisation only: no propagation and no edge dropout.
    pub fn without_diffusion(self) -> Self {
        Self {
            k: 0,
            p_drop: 0.0,
            ..self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionParams {
    /// `p0 × d_out`.
    pub w: DenseMatrix,
    pub b: Vec<f64>,
}

impl DiffusionParams {
    pub fn init(p0: usize, d_out: usize, seed: u64) -> Result<Self> {
        if p0 == 0 || d_out == 0 {
            return Err(Error::InvalidParameter(format!(
                "projection dimensions must be >= 1, got {p0}×{d_out}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        Ok(Self {
            w: xavier_uniform(&mut rng, p0, d_out),
            b: vec![0.0; d_out],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.b.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `X·W`, plus `b` on every row when given.
pub fn project(x: &DenseMatrix, w: &DenseMatrix, b: Option<&[f64]>) -> Result<DenseMatrix> {
    let mut z = x.matmul(w)?;
    if let Some(b) = b {
        z.add_row_vector(b)?;
    }
    Ok(z)
}

/// `k` steps of `Z ← αÃZ + (1−α)Z`.
pub fn diffuse(a: &NormAdj, z0: &DenseMatrix, alpha: f64, k: usize) -> Result<DenseMatrix> {
    if z0.rows() != a.n() {
        return Err(Error::dims("diffuse", a.n(), z0.rows()));
    }
    let mut z = z0.clone();
    for _ in 0..k {
        let mut next = spmm(a, &z)?;
        next.scale(alpha);
        next.axpy(1.0 - alpha, &z)?;
        z = next;
    }
    Ok(z)
}

/// Output of [`finalize`] plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct Finalized {
    pub h: DenseMatrix,
    /// `Z^K + b` before the ReLU.
    pub pre: DenseMatrix,
    /// Per-entry dropout multiplier: `0` or `1/(1−p_feat)`, all ones in eval mode.
    pub keep_scale: Vec<f64>,
}

/// Bias, ReLU, then inverted feature dropout (training mode only).
pub fn finalize(zk: &DenseMatrix, b: &[f64], p_feat: f64, seed: u64, mode: Mode) -> Result<Finalized> {
    if !(0.0..1.0).contains(&p_feat) {
        return Err(Error::InvalidParameter(format!(
            "p_feat must lie in [0, 1), got {p_feat}"
        )));
    }
    let mut pre = zk.clone();
    pre.add_row_vector(b)?;
    let mut h = pre.map(relu);
    let len = h.as_slice().len();
    let keep_scale = if mode == Mode::Train && p_feat > 0.0 {
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (1.0 - p_feat);
        (0..len)
            .map(|_| if rng.random::<f64>() >= p_feat { scale } else { 0.0 })
            .collect()
    } else {
        vec![1.0; len]
    };
    for (v, s) in h.as_mut_slice().iter_mut().zip(&keep_scale) {
        *v *= s;
    }
    Ok(Finalized { h, pre, keep_scale })
}

/// Everything produced by one forward pass of the diffusion stage.
#[derive(Clone, Debug)]
pub struct RdForward {
    /// Operator the diffusion ran on (perturbed in training mode).
    pub a_diff: NormAdj,
    pub out: Finalized,
}

/// Sub-seeds for edge dropout and feature dropout.
fn split_seed(seed: u64) -> (u64, u64) {
    let mut rng = rng_from_seed(seed);
    (rng.next_u64(), rng.next_u64())
}

/// Diffusion forward pass starting from a precomputed `Â`.
pub fn rd_forward(
    a: &NormAdj,
    x: &DenseMatrix,
    cfg: &DiffusionConfig,
    params: &DiffusionParams,
    seed: u64,
    mode: Mode,
) -> Result<RdForward> {
    cfg.validate()?;
    if x.rows() != a.n() {
        return Err(Error::dims("run_rd features", a.n(), x.rows()));
    }
    let (edge_seed, feat_seed) = split_seed(seed);
    let a_diff = match mode {
        Mode::Train => perturb_edges(a, cfg.p_drop, edge_seed)?,
        Mode::Eval => a.clone(),
    };
    let z0 = project(x, &params.w, None)?;
    let zk = diffuse(&a_diff, &z0, cfg.alpha, cfg.k)?;
    let out = finalize(&zk, &params.b, cfg.p_feat, feat_seed, mode)?;
    Ok(RdForward { a_diff, out })
}

/// normalize → perturb (training only) → project → diffuse → finalize.
pub fn run_rd(
    g: &SparseGraph,
    x: &DenseMatrix,
    cfg: &DiffusionConfig,
    params: &DiffusionParams,
    seed: u64,
    mode: Mode,
) -> Result<DenseMatrix> {
    let a = normalize_sym(g);
    Ok(rd_forward(&a, x, cfg, params, seed, mode)?.out.h)
}

/// Gradients of a scalar loss w.r.t. `W` and `b`, given `∂L/∂H`.
pub fn rd_backward(
    fwd: &RdForward,
    x: &DenseMatrix,
    cfg: &DiffusionConfig,
    d_h: &DenseMatrix,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let fin = &fwd.out;
    if d_h.shape() != fin.pre.shape() {
        return Err(Error::dims(
            "rd_backward",
            format!("{:?}", fin.pre.shape()),
            format!("{:?}", d_h.shape()),
        ));
    }
    let mut d_pre = d_h.clone();
    for ((g, &s), &z) in d_pre
        .as_mut_slice()
        .iter_mut()
        .zip(&fin.keep_scale)
        .zip(fin.pre.as_slice())
    {
        *g = if z > 0.0 { *g * s } else { 0.0 };
    }
    let d_b = d_pre.column_sums();
    // The step operator is symmetric, so its adjoint is itself.
    let d_z0 = diffuse(&fwd.a_diff, &d_pre, cfg.alpha, cfg.k)?;
    Ok((x.t_matmul(&d_z0)?, d_b))
}
