//! Classification head on diffused embeddings and joint training of the
//! head together with the diffusion projection.
//!
//! Per node: `h' = relu(W̃1 · [h_v ∥ (ÂH)_v])`, `ŷ = softmax(W̃2 · h')`.

use crate::dense::{argmax, relu, softmax_rows};
use crate::diffusion::{rd_backward, rd_forward, DiffusionConfig, DiffusionParams, Mode};
use crate::encoder::xavier_uniform;
use crate::graph::{spmm, NormAdj};
use crate::{rng_from_seed, DenseMatrix, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    /// `F × 2F`.
    pub w1: DenseMatrix,
    /// `M × F`.
    pub w2: DenseMatrix,
}

impl ClassifierParams {
    pub fn init(hidden: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || num_classes == 0 {
            return Err(Error::InvalidParameter(format!(
                "classifier dimensions must be >= 1, got F={hidden} M={num_classes}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        Ok(Self {
            w1: xavier_uniform(&mut rng, hidden, 2 * hidden),
            w2: xavier_uniform(&mut rng, num_classes, hidden),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.w2.is_finite()
    }

    fn check(&self, h: &DenseMatrix, a: &NormAdj) -> Result<()> {
        let f = self.hidden_dim();
        if self.w1.cols() != 2 * f || self.w2.cols() != f {
            return Err(Error::dims(
                "classifier weights",
                format!("W1 {f}×{} and W2 M×{f}", 2 * f),
                format!("W1 {:?}, W2 {:?}", self.w1.shape(), self.w2.shape()),
            ));
        }
        if h.cols() != f {
            return Err(Error::dims("classifier input", format!("{f} columns"), h.cols()));
        }
        if h.rows() != a.n() {
            return Err(Error::dims("classifier input", format!("{} rows", a.n()), h.rows()));
        }
        Ok(())
    }
}

struct HeadForward {
    cat: DenseMatrix,
    pre: DenseMatrix,
    hidden: DenseMatrix,
    probs: DenseMatrix,
}

fn head_forward(h: &DenseMatrix, a: &NormAdj, params: &ClassifierParams) -> Result<HeadForward> {
    params.check(h, a)?;
    let cat = h.hcat(&spmm(a, h)?)?;
    let pre = cat.matmul_t(&params.w1)?;
    let hidden = pre.map(relu);
    let probs = softmax_rows(&hidden.matmul_t(&params.w2)?);
    Ok(HeadForward { cat, pre, hidden, probs })
}

/// Class probabilities, `n × M`.
pub fn forward(h: &DenseMatrix, a: &NormAdj, params: &ClassifierParams) -> Result<DenseMatrix> {
    Ok(head_forward(h, a, params)?.probs)
}

/// Hidden activations `relu(W̃1 · [h ∥ Âh])`, the head's node representation.
pub fn hidden(h: &DenseMatrix, a: &NormAdj, params: &ClassifierParams) -> Result<DenseMatrix> {
    Ok(head_forward(h, a, params)?.hidden)
}

fn masked_nodes(n: usize, labels: &[usize], mask: &[bool], classes: usize) -> Result<Vec<usize>> {
    if labels.len() != n || mask.len() != n {
        return Err(Error::dims(
            "labels/mask",
            n,
            format!("{} labels, {} mask", labels.len(), mask.len()),
        ));
    }
    let nodes: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if nodes.is_empty() {
        return Err(Error::EmptyMask);
    }
    if let Some(&i) = nodes.iter().find(|&&i| labels[i] >= classes) {
        return Err(Error::InvalidParameter(format!(
            "node {i} has label {} but there are {classes} classes",
            labels[i]
        )));
    }
    Ok(nodes)
}

/// Mean cross-entropy over the masked rows of a probability matrix.
pub fn loss(y_hat: &DenseMatrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let nodes = masked_nodes(y_hat.rows(), labels, mask, y_hat.cols())?;
    let total: f64 = nodes
        .iter()
        .map(|&i| -y_hat[(i, labels[i])].max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / nodes.len() as f64)
}

/// Row-wise argmax of the forward output; ties go to the lowest class id.
pub fn predict(params: &ClassifierParams, h: &DenseMatrix, a: &NormAdj) -> Result<Vec<usize>> {
    let p = forward(h, a, params)?;
    Ok((0..p.rows()).map(|i| argmax(p.row(i))).collect())
}

/// Diffusion projection and classifier head, trained together.
#[derive(Clone, Debug, PartialEq)]
pub struct SbParams {
    pub diffusion: DiffusionParams,
    pub classifier: ClassifierParams,
}

impl SbParams {
    pub fn init(p0: usize, cfg: &DiffusionConfig, num_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let (s1, s2) = (rand::RngCore::next_u64(&mut rng), rand::RngCore::next_u64(&mut rng));
        Ok(Self {
            diffusion: DiffusionParams::init(p0, cfg.d_out, s1)?,
            classifier: ClassifierParams::init(cfg.d_out, num_classes, s2)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.diffusion.is_finite() && self.classifier.is_finite()
    }

    /// All parameters in a fixed order: `W`, `b`, `W̃1`, `W̃2`.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [
            self.diffusion.w.as_slice(),
            &self.diffusion.b,
            self.classifier.w1.as_slice(),
            self.classifier.w2.as_slice(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.diffusion.w.as_mut_slice(),
            &mut self.diffusion.b,
            self.classifier.w1.as_mut_slice(),
            self.classifier.w2.as_mut_slice(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct SbGrads {
    pub w: DenseMatrix,
    pub b: Vec<f64>,
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
}

impl SbGrads {
    pub fn blocks(&self) -> [&[f64]; 4] {
        [self.w.as_slice(), &self.b, self.w1.as_slice(), self.w2.as_slice()]
    }
}

/// Static inputs of the joint model: `Â` of the (augmented) graph and features.
#[derive(Clone, Copy, Debug)]
pub struct Pipeline<'a> {
    pub a: &'a NormAdj,
    pub x: &'a DenseMatrix,
    pub cfg: &'a DiffusionConfig,
}

impl Pipeline<'_> {
    /// Probabilities and classifier hidden layer for a full forward pass.
    pub fn forward(&self, params: &SbParams, seed: u64, mode: Mode) -> Result<(DenseMatrix, DenseMatrix)> {
        let rd = rd_forward(self.a, self.x, self.cfg, &params.diffusion, seed, mode)?;
        let head = head_forward(&rd.out.h, self.a, &params.classifier)?;
        Ok((head.probs, head.hidden))
    }

    /// Masked mean cross-entropy of one forward pass and its exact gradients.
    /// With `seed` and `mode` fixed the loss is a deterministic function of
    /// the parameters.
    pub fn loss_and_grads(
        &self,
        params: &SbParams,
        labels: &[usize],
        mask: &[bool],
        seed: u64,
        mode: Mode,
    ) -> Result<(f64, SbGrads)> {
        let rd = rd_forward(self.a, self.x, self.cfg, &params.diffusion, seed, mode)?;
        let head = head_forward(&rd.out.h, self.a, &params.classifier)?;
        let cp = &params.classifier;
        let m_classes = cp.num_classes();
        let nodes = masked_nodes(self.x.rows(), labels, mask, m_classes)?;

        let m = nodes.len() as f64;
        let mut total = 0.0;
        let mut d_logits = DenseMatrix::zeros(self.x.rows(), m_classes);
        for &i in &nodes {
            total -= head.probs[(i, labels[i])].max(f64::MIN_POSITIVE).ln();
            for c in 0..m_classes {
                let y = if c == labels[i] { 1.0 } else { 0.0 };
                d_logits[(i, c)] = (head.probs[(i, c)] - y) / m;
            }
        }

        let w2 = d_logits.t_matmul(&head.hidden)?;
        let mut d_pre = d_logits.matmul(&cp.w2)?;
        for (g, &z) in d_pre.as_mut_slice().iter_mut().zip(head.pre.as_slice()) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        let w1 = d_pre.t_matmul(&head.cat)?;
        let d_cat = d_pre.matmul(&cp.w1)?;
        let f = cp.hidden_dim();
        // Â is symmetric, so Âᵀ·g = Â·g.
        let mut d_h = d_cat.columns(0, f);
        d_h.axpy(1.0, &spmm(self.a, &d_cat.columns(f, 2 * f))?)?;
        let (w, b) = rd_backward(&rd, self.x, self.cfg, &d_h)?;
        Ok((total / m, SbGrads { w, b, w1, w2 }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty added to every gradient.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

/// Adam moment estimates, one buffer per parameter block.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &SbParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, params: &mut SbParams, grads: &SbGrads, lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let blocks = params.blocks_mut();
        for (k, (p, g)) in blocks.into_iter().zip(grads.blocks()).enumerate() {
            for i in 0..p.len() {
                let gi = g[i] + weight_decay * p[i];
                self.m[k][i] = Self::BETA1 * self.m[k][i] + (1.0 - Self::BETA1) * gi;
                self.v[k][i] = Self::BETA2 * self.v[k][i] + (1.0 - Self::BETA2) * gi * gi;
                p[i] -= lr * (self.m[k][i] / c1) / ((self.v[k][i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Full-batch joint training with Adam. Each epoch draws a fresh edge and
/// feature dropout sample.
pub fn train(
    pipeline: &Pipeline<'_>,
    mut params: SbParams,
    labels: &[usize],
    mask: &[bool],
    hp: &TrainConfig,
) -> Result<SbParams> {
    if hp.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    if !(hp.lr >= 0.0 && hp.lr.is_finite()) || !(hp.weight_decay >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need lr >= 0 and weight_decay >= 0, got lr={} weight_decay={}",
            hp.lr, hp.weight_decay
        )));
    }
    let mut adam = Adam::new(&params);
    let mut seeds = rng_from_seed(hp.seed);
    for epoch in 0..hp.epochs {
        let step_seed = rand::RngCore::next_u64(&mut seeds);
        let (loss, grads) = pipeline.loss_and_grads(&params, labels, mask, step_seed, Mode::Train)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if hp.lr == 0.0 {
            continue;
        }
        adam.step(&mut params, &grads, hp.lr, hp.weight_decay);
        if !params.is_finite() {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
    }
    Ok(params)
}
