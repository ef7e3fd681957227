//! Feature-view encoder: a one-hidden-layer MLP.
//!
//! The hidden ReLU layer is the node embedding `h_u`; a linear head plus
//! softmax on top of it gives the feature-view class distribution `P_self`.

use rand::Rng;

use crate::dense::{argmax, dot, relu, softmax_rows};
use crate::{rng_from_seed, DenseMatrix, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// Input → hidden, `p0 × d`.
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    /// Hidden → classes, `d × C`.
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims(
                "encoder input",
                format!("{} feature columns", self.input_dim()),
                x.cols(),
            ));
        }
        Ok(())
    }
}

/// Gradients of the masked mean cross-entropy w.r.t. every encoder parameter.
#[derive(Clone, Debug)]
pub struct EncoderGrads {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

/// Uniform in `[−s, s]`, `s = √(6 / (fan_in + fan_out))`.
pub(crate) fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-s..=s))
}

pub fn init_encoder(p0: usize, d: usize, num_classes: usize, seed: u64) -> Result<EncoderParams> {
    if p0 == 0 || d == 0 || num_classes == 0 {
        return Err(Error::InvalidParameter(format!(
            "encoder dimensions must be >= 1, got p0={p0} d={d} classes={num_classes}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let w1 = xavier_uniform(&mut rng, p0, d);
    let w2 = xavier_uniform(&mut rng, d, num_classes);
    Ok(EncoderParams {
        w1,
        b1: vec![0.0; d],
        w2,
        b2: vec![0.0; num_classes],
    })
}

fn hidden_pre(params: &EncoderParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    params.check_input(x)?;
    let mut pre = x.matmul(&params.w1)?;
    pre.add_row_vector(&params.b1)?;
    Ok(pre)
}

/// Embeddings `relu(X·W1 + b1)`, one row per node.
pub fn embed(params: &EncoderParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(hidden_pre(params, x)?.map(relu))
}

fn logits_from_hidden(params: &EncoderParams, h: &DenseMatrix) -> Result<DenseMatrix> {
    let mut logits = h.matmul(&params.w2)?;
    logits.add_row_vector(&params.b2)?;
    Ok(logits)
}

/// `softmax(embed(X)·W2 + b2)`.
pub fn predict_proba(params: &EncoderParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    let h = embed(params, x)?;
    Ok(softmax_rows(&logits_from_hidden(params, &h)?))
}

fn masked_nodes(labels: &[usize], mask: &[bool], n: usize, classes: usize) -> Result<Vec<usize>> {
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
            "node {i} has label {} but the encoder has {classes} classes",
            labels[i]
        )));
    }
    Ok(nodes)
}

/// Masked mean cross-entropy and its gradients.
pub fn loss_and_grads(
    params: &EncoderParams,
    x: &DenseMatrix,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, EncoderGrads)> {
    let nodes = masked_nodes(labels, mask, x.rows(), params.num_classes())?;
    let pre = hidden_pre(params, x)?;
    let h = pre.map(relu);
    let probs = softmax_rows(&logits_from_hidden(params, &h)?);

    let m = nodes.len() as f64;
    let mut loss = 0.0;
    let mut dlogits = DenseMatrix::zeros(x.rows(), params.num_classes());
    for &i in &nodes {
        loss -= probs[(i, labels[i])].max(f64::MIN_POSITIVE).ln();
        for c in 0..params.num_classes() {
            let y = if c == labels[i] { 1.0 } else { 0.0 };
            dlogits[(i, c)] = (probs[(i, c)] - y) / m;
        }
    }
    loss /= m;

    let w2 = h.t_matmul(&dlogits)?;
    let b2 = dlogits.column_sums();
    let mut dpre = dlogits.matmul_t(&params.w2)?;
    for (g, &z) in dpre.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    let w1 = x.t_matmul(&dpre)?;
    let b1 = dpre.column_sums();
    Ok((loss, EncoderGrads { w1, b1, w2, b2 }))
}

/// Full-batch gradient descent on the masked mean cross-entropy.
pub fn train_encoder(
    mut params: EncoderParams,
    x: &DenseMatrix,
    labels: &[usize],
    mask: &[bool],
    epochs: usize,
    lr: f64,
) -> Result<EncoderParams> {
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {lr}")));
    }
    for epoch in 0..epochs {
        let (loss, g) = loss_and_grads(&params, x, labels, mask)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if lr == 0.0 {
            continue;
        }
        params.w1.axpy(-lr, &g.w1)?;
        params.w2.axpy(-lr, &g.w2)?;
        for (p, d) in params.b1.iter_mut().zip(&g.b1) {
            *p -= lr * d;
        }
        for (p, d) in params.b2.iter_mut().zip(&g.b2) {
            *p -= lr * d;
        }
    }
    Ok(params)
}

/// Predicted class per row of `x`.
pub fn predict(params: &EncoderParams, x: &DenseMatrix) -> Result<Vec<usize>> {
    let p = predict_proba(params, x)?;
    Ok((0..p.rows()).map(|i| argmax(p.row(i))).collect())
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}
