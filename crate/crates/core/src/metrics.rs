//! Classification metrics and the embedding separation ratio.

use std::fmt;

use crate::dense::argmax;
use crate::{DenseMatrix, Error, Result};

fn masked(n_pred: usize, truth: &[usize], mask: &[bool]) -> Result<Vec<usize>> {
    if truth.len() != n_pred || mask.len() != n_pred {
        return Err(Error::dims(
            "metric inputs",
            n_pred,
            format!("{} labels, {} mask", truth.len(), mask.len()),
        ));
    }
    let idx: Vec<usize> = (0..n_pred).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(idx)
}

pub fn accuracy(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    let idx = masked(pred.len(), truth, mask)?;
    let hits = idx.iter().filter(|&&i| pred[i] == truth[i]).count();
    Ok(hits as f64 / idx.len() as f64)
}

/// F1 per class; undefined precision or recall counts as zero.
pub fn per_class_f1(pred: &[usize], truth: &[usize], mask: &[bool], num_classes: usize) -> Result<Vec<f64>> {
    let idx = masked(pred.len(), truth, mask)?;
    let mut tp = vec![0usize; num_classes];
    let mut n_pred = vec![0usize; num_classes];
    let mut n_true = vec![0usize; num_classes];
    for &i in &idx {
        let (p, t) = (pred[i], truth[i]);
        if p >= num_classes || t >= num_classes {
            return Err(Error::InvalidParameter(format!(
                "node {i}: class id outside 0..{num_classes}"
            )));
        }
        n_pred[p] += 1;
        n_true[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    Ok((0..num_classes)
        .map(|c| {
            if tp[c] == 0 {
                return 0.0;
            }
            let precision = tp[c] as f64 / n_pred[c] as f64;
            let recall = tp[c] as f64 / n_true[c] as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .collect())
}

pub fn macro_f1(pred: &[usize], truth: &[usize], mask: &[bool], num_classes: usize) -> Result<f64> {
    let f1 = per_class_f1(pred, truth, mask, num_classes)?;
    Ok(f1.iter().sum::<f64>() / num_classes as f64)
}

/// 1-based ranks with ties sharing their mean rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Rank-based AUC of `scores` for the positive set.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Macro one-vs-rest AUC over the masked rows. Classes without both positive
/// and negative examples in the mask are left out of the average.
pub fn auc_ovr(scores: &DenseMatrix, truth: &[usize], mask: &[bool]) -> Result<f64> {
    let idx = masked(scores.rows(), truth, mask)?;
    let per_class: Vec<f64> = (0..scores.cols())
        .filter_map(|c| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[(i, c)]).collect();
            let pos: Vec<bool> = idx.iter().map(|&i| truth[i] == c).collect();
            binary_auc(&s, &pos)
        })
        .collect();
    if per_class.is_empty() {
        return Err(Error::InvalidParameter(
            "AUC needs at least two classes present in the mask".into(),
        ));
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Ratio of mean inter-class to mean intra-class Euclidean distance.
///
/// Intra distance is averaged over classes with at least two members;
/// inter distance over every pair of nonempty classes. A zero intra distance
/// gives `f64::INFINITY`.
pub fn intra_inter_ratio(embeddings: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != embeddings.rows() {
        return Err(Error::dims("intra_inter_ratio", embeddings.rows(), labels.len()));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let classes: Vec<&Vec<usize>> = members.iter().filter(|m| !m.is_empty()).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter(
            "intra/inter ratio needs at least two classes".into(),
        ));
    }

    let intra: Vec<f64> = classes
        .iter()
        .filter(|m| m.len() >= 2)
        .map(|m| {
            let mut s = 0.0;
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    s += dist(embeddings.row(i), embeddings.row(j));
                }
            }
            // Unordered pairs counted once: Σ_{i≠j} d / (N(N−1)) = 2s / (N(N−1)).
            2.0 * s / (m.len() * (m.len() - 1)) as f64
        })
        .collect();
    if intra.is_empty() {
        return Err(Error::InvalidParameter(
            "every class is a singleton; intra-class distance is undefined".into(),
        ));
    }

    let mut inter = Vec::new();
    for (k, a) in classes.iter().enumerate() {
        for b in &classes[k + 1..] {
            let mut s = 0.0;
            for &i in a.iter() {
                for &j in b.iter() {
                    s += dist(embeddings.row(i), embeddings.row(j));
                }
            }
            inter.push(s / (a.len() * b.len()) as f64);
        }
    }

    let d_intra = intra.iter().sum::<f64>() / intra.len() as f64;
    let d_inter = inter.iter().sum::<f64>() / inter.len() as f64;
    if d_intra == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(d_inter / d_intra)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub auc: f64,
    pub per_class_f1: Vec<f64>,
    pub r_ratio: f64,
}

impl EvalReport {
    /// Metrics of `probs` (and `R` of `embeddings`) on the masked nodes.
    pub fn compute(
        probs: &DenseMatrix,
        embeddings: &DenseMatrix,
        truth: &[usize],
        mask: &[bool],
    ) -> Result<Self> {
        let c = probs.cols();
        let pred: Vec<usize> = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
        let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let sub_labels: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        Ok(Self {
            accuracy: accuracy(&pred, truth, mask)?,
            macro_f1: macro_f1(&pred, truth, mask, c)?,
            auc: auc_ovr(probs, truth, mask)?,
            per_class_f1: per_class_f1(&pred, truth, mask, c)?,
            r_ratio: intra_inter_ratio(&embeddings.select_rows(&idx), &sub_labels)?,
        })
    }

    /// Flat `(key, value)` pairs in a fixed order.
    pub fn fields(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("accuracy".to_string(), self.accuracy),
            ("macro_f1".to_string(), self.macro_f1),
            ("auc".to_string(), self.auc),
        ];
        for (c, f) in self.per_class_f1.iter().enumerate() {
            out.push((format!("f1_class_{c}"), *f));
        }
        out.push(("r_ratio".to_string(), self.r_ratio));
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.fields() {
            writeln!(f, "{k}={v:.6}")?;
        }
        Ok(())
    }
}
