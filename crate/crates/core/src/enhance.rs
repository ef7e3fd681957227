//! Hard-sample mining and similarity-gated edge augmentation.
//!
//! A node is a hard sample when its feature-view prediction puts a majority
//! class first and a minority class second with non-trivial mass, while its
//! neighbourhood's averaged prediction leans minority. Each such node gets at
//! most one new edge to the most similar labelled anchor of its runner-up
//! class, and only if it is more similar to that anchor than the anchor's own
//! neighbours are on average.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::encoder::{self, cosine_sim, EncoderParams};
use crate::graph::{add_edges, normalize_sym, NormAdj, SparseGraph};
use crate::{DenseMatrix, Error, Result};

/// Default feature-view threshold: half of the 0.5 ceiling on a runner-up probability.
pub const DEFAULT_XI: f64 = 0.25;

/// Split of class ids into minority and majority sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPartition {
    minority: Vec<bool>,
}

impl ClassPartition {
    pub fn new(num_classes: usize, minority: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut flags = vec![false; num_classes];
        for c in minority {
            if c >= num_classes {
                return Err(Error::InvalidParameter(format!(
                    "minority class {c} outside 0..{num_classes}"
                )));
            }
            flags[c] = true;
        }
        let n_mi = flags.iter().filter(|&&f| f).count();
        if n_mi == 0 || n_mi == num_classes {
            return Err(Error::InvalidParameter(
                "both the minority and the majority class sets must be nonempty".into(),
            ));
        }
        Ok(Self { minority: flags })
    }

    /// The last `⌈C/2⌉` class ids are minority.
    pub fn last_half(num_classes: usize) -> Result<Self> {
        let n_mi = num_classes.div_ceil(2);
        Self::new(num_classes, num_classes - n_mi..num_classes)
    }

    pub fn num_classes(&self) -> usize {
        self.minority.len()
    }

    pub fn is_minority(&self, c: usize) -> bool {
        self.minority[c]
    }

    pub fn minority_classes(&self) -> Vec<usize> {
        (0..self.num_classes()).filter(|&c| self.minority[c]).collect()
    }

    pub fn majority_classes(&self) -> Vec<usize> {
        (0..self.num_classes()).filter(|&c| !self.minority[c]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub node: usize,
    pub top1: usize,
    /// Runner-up class; the minority class the node is pulled toward (`c*`).
    pub top2: usize,
    pub top2_prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateSet {
    /// Nodes passing the feature-view filter, ascending by id.
    pub s_init: Vec<Candidate>,
    /// Subset of `s_init` confirmed by neighbour consensus.
    pub s_cand: Vec<Candidate>,
}

/// Top-two classes of a probability row; ties resolve to the lower class id.
fn top_two(row: &[f64]) -> (usize, usize) {
    let mut first = 0;
    for c in 1..row.len() {
        if row[c] > row[first] {
            first = c;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for c in 0..row.len() {
        if c != first && row[c] > row[second] {
            second = c;
        }
    }
    (first, second)
}

/// Feature-view filter: top-1 majority, top-2 minority, and `P(top-2) > ξ`.
pub fn mine_initial(p_self: &DenseMatrix, partition: &ClassPartition, xi: f64) -> Result<CandidateSet> {
    if !(0.0..0.5).contains(&xi) {
        return Err(Error::InvalidParameter(format!(
            "xi must lie in [0, 0.5), got {xi}"
        )));
    }
    if p_self.cols() != partition.num_classes() || p_self.cols() < 2 {
        return Err(Error::dims(
            "mine_initial",
            format!("{} (>= 2) class columns", partition.num_classes()),
            p_self.cols(),
        ));
    }
    let s_init = (0..p_self.rows())
        .filter_map(|u| {
            let row = p_self.row(u);
            let (top1, top2) = top_two(row);
            (!partition.is_minority(top1) && partition.is_minority(top2) && row[top2] > xi).then_some(
                Candidate {
                    node: u,
                    top1,
                    top2,
                    top2_prob: row[top2],
                },
            )
        })
        .collect();
    Ok(CandidateSet {
        s_init,
        s_cand: Vec::new(),
    })
}

/// `P_neigh(u) = Σ_v Â_uv · P_self(v)`, self-loop term included.
pub fn neighbor_prediction(a: &NormAdj, p_self: &DenseMatrix, u: usize) -> Vec<f64> {
    let mut out = vec![0.0; p_self.cols()];
    let (cols, vals) = a.row(u);
    for (&v, &w) in cols.iter().zip(vals) {
        for (o, &p) in out.iter_mut().zip(p_self.row(v)) {
            *o += w * p;
        }
    }
    out
}

fn class_mean(values: &[f64], classes: &[usize]) -> f64 {
    classes.iter().map(|&c| values[c]).sum::<f64>() / classes.len() as f64
}

/// Keeps the `s_init` nodes whose neighbourhood mean over minority classes
/// strictly exceeds the mean over majority classes.
pub fn neighbor_consensus(
    a: &NormAdj,
    p_self: &DenseMatrix,
    candidates: &CandidateSet,
    partition: &ClassPartition,
) -> Result<CandidateSet> {
    if p_self.rows() != a.n() {
        return Err(Error::dims("neighbor_consensus", a.n(), p_self.rows()));
    }
    let mi = partition.minority_classes();
    let ma = partition.majority_classes();
    let s_cand = candidates
        .s_init
        .iter()
        .filter(|c| {
            let pn = neighbor_prediction(a, p_self, c.node);
            class_mean(&pn, &mi) > class_mean(&pn, &ma)
        })
        .copied()
        .collect();
    Ok(CandidateSet {
        s_init: candidates.s_init.clone(),
        s_cand,
    })
}

/// Mean cosine similarity between `v` and its neighbours; `-1` for an isolated node.
pub fn anchor_threshold(g: &SparseGraph, h: &DenseMatrix, v: usize) -> f64 {
    let nb = g.neighbors(v);
    if nb.is_empty() {
        return -1.0;
    }
    nb.iter().map(|&w| cosine_sim(h.row(v), h.row(w))).sum::<f64>() / nb.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorEdge {
    pub candidate: usize,
    pub anchor: usize,
    pub class: usize,
    pub similarity: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentationReport {
    pub added: Vec<AnchorEdge>,
    pub rejected: Vec<AnchorEdge>,
    /// `(candidate, class)` pairs with no anchor available.
    pub skipped: Vec<(usize, usize)>,
}

enum Decision {
    Accept(AnchorEdge),
    Reject(AnchorEdge),
    Skip(usize, usize),
}

/// Most similar anchor in `pool` (excluding `u`), lowest id on ties.
pub fn best_anchor(h: &DenseMatrix, u: usize, pool: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &v in pool {
        if v == u {
            continue;
        }
        let s = cosine_sim(h.row(u), h.row(v));
        match best {
            Some((bv, bs)) if s < bs || (s == bs && v > bv) => {}
            _ => best = Some((v, s)),
        }
    }
    best
}

/// Connects each candidate to its best same-class anchor when the similarity
/// beats the anchor's neighbour-mean threshold. `anchors_by_class[c]` lists
/// the labelled training nodes of class `c`.
pub fn augment(
    g: &SparseGraph,
    h: &DenseMatrix,
    s_cand: &[Candidate],
    anchors_by_class: &[Vec<usize>],
) -> Result<(SparseGraph, AugmentationReport)> {
    if h.rows() != g.n() {
        return Err(Error::dims("augment embeddings", g.n(), h.rows()));
    }
    let mut order: Vec<Candidate> = s_cand.to_vec();
    order.sort_by_key(|c| c.node);
    order.dedup_by_key(|c| c.node);

    let decisions: Vec<Decision> = order
        .par_iter()
        .map(|c| {
            let pool = anchors_by_class.get(c.top2).map(Vec::as_slice).unwrap_or(&[]);
            match best_anchor(h, c.node, pool) {
                None => Decision::Skip(c.node, c.top2),
                Some((anchor, similarity)) => {
                    let edge = AnchorEdge {
                        candidate: c.node,
                        anchor,
                        class: c.top2,
                        similarity,
                        threshold: anchor_threshold(g, h, anchor),
                    };
                    if similarity > edge.threshold {
                        Decision::Accept(edge)
                    } else {
                        Decision::Reject(edge)
                    }
                }
            }
        })
        .collect();

    let mut report = AugmentationReport::default();
    for d in decisions {
        match d {
            Decision::Accept(e) => report.added.push(e),
            Decision::Reject(e) => report.rejected.push(e),
            Decision::Skip(u, c) => report.skipped.push((u, c)),
        }
    }
    let new_edges: Vec<(usize, usize)> = report.added.iter().map(|e| (e.candidate, e.anchor)).collect();
    Ok((add_edges(g, &new_edges)?, report))
}

/// Groups the masked nodes by label, ascending ids within each class.
pub fn anchors_by_class(labels: &[usize], mask: &[bool], num_classes: usize) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); num_classes];
    for (i, (&y, &m)) in labels.iter().zip(mask).enumerate() {
        if m && y < num_classes {
            pools[y].push(i);
        }
    }
    pools
}

#[derive(Clone, Debug)]
pub struct Enhancement {
    pub graph: SparseGraph,
    pub candidates: CandidateSet,
    pub report: AugmentationReport,
}

impl Enhancement {
    /// Endpoints touched by accepted edges.
    pub fn touched_nodes(&self) -> BTreeSet<usize> {
        self.report
            .added
            .iter()
            .flat_map(|e| [e.candidate, e.anchor])
            .collect()
    }
}

/// Full structure-enhancement pass using a trained feature-view encoder.
pub fn structure_enhancement(
    g: &SparseGraph,
    x: &DenseMatrix,
    encoder: &EncoderParams,
    partition: &ClassPartition,
    anchors_by_class: &[Vec<usize>],
    xi: f64,
) -> Result<Enhancement> {
    let h = encoder::embed(encoder, x)?;
    let p_self = encoder::predict_proba(encoder, x)?;
    let a = normalize_sym(g);
    let initial = mine_initial(&p_self, partition, xi)?;
    let candidates = neighbor_consensus(&a, &p_self, &initial, partition)?;
    let (graph, report) = augment(g, &h, &candidates.s_cand, anchors_by_class)?;
    Ok(Enhancement {
        graph,
        candidates,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn two_class() -> ClassPartition {
        ClassPartition::new(2, [1]).unwrap()
    }

    fn probs(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(ClassPartition::new(3, []).is_err());
        assert!(ClassPartition::new(2, [0, 1]).is_err());
        assert!(ClassPartition::new(2, [2]).is_err());
        let p = ClassPartition::last_half(7).unwrap();
        assert_eq!(p.minority_classes(), vec![3, 4, 5, 6]);
        assert_eq!(p.majority_classes(), vec![0, 1, 2]);
    }

    #[test]
    fn feature_view_filter() {
        let p = probs(&[&[0.9, 0.1], &[0.6, 0.4], &[0.3, 0.7]]);
        let set = mine_initial(&p, &two_class(), 0.25).unwrap();
        let nodes: Vec<_> = set.s_init.iter().map(|c| c.node).collect();
        assert_eq!(nodes, vec![1]);
        assert_eq!(set.s_init[0].top2, 1);
        // Top-1 minority is never a candidate, whatever ξ is.
        let set = mine_initial(&p, &two_class(), 0.0).unwrap();
        assert!(set.s_init.iter().all(|c| c.node != 2));
    }

    #[test]
    fn xi_out_of_range() {
        let p = probs(&[&[0.6, 0.4]]);
        assert!(mine_initial(&p, &two_class(), 0.5).is_err());
        assert!(mine_initial(&p, &two_class(), -0.1).is_err());
    }

    #[test]
    fn consensus_keeps_minority_neighbourhoods() {
        // Node 0 is the candidate; its neighbours are confident minority.
        let g = build_graph(&[(0, 1), (0, 2)], 3).unwrap();
        let a = normalize_sym(&g);
        let p = probs(&[&[0.6, 0.4], &[0.0, 1.0], &[0.0, 1.0]]);
        let init = mine_initial(&p, &two_class(), 0.25).unwrap();
        let out = neighbor_consensus(&a, &p, &init, &two_class()).unwrap();
        assert_eq!(out.s_cand.len(), 1);
    }

    #[test]
    fn consensus_drops_ties() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let a = normalize_sym(&g);
        let p = probs(&[&[0.6, 0.4], &[0.4, 0.6]]);
        let init = mine_initial(&p, &two_class(), 0.25).unwrap();
        // P_neigh(0) = ½(0.6, 0.4) + ½(0.4, 0.6) = (0.5, 0.5).
        let out = neighbor_consensus(&a, &p, &init, &two_class()).unwrap();
        assert!(out.s_cand.is_empty());
    }

    #[test]
    fn threshold_cases() {
        let g = build_graph(&[(0, 1), (2, 3), (2, 4)], 5).unwrap();
        let h = probs(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        assert_eq!(anchor_threshold(&g, &h, 0), cosine_sim(h.row(0), h.row(1)));
        assert!((anchor_threshold(&g, &h, 2) - 1.0).abs() < 1e-15);
        let iso = build_graph(&[], 2).unwrap();
        assert_eq!(anchor_threshold(&iso, &h.select_rows(&[0, 1]), 0), -1.0);
    }

    #[test]
    fn identical_candidate_gets_edge() {
        // Anchor 1 has a dissimilar neighbour 2; candidate 0 matches it exactly.
        let g = build_graph(&[(1, 2)], 3).unwrap();
        let h = probs(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let cand = Candidate { node: 0, top1: 0, top2: 1, top2_prob: 0.4 };
        let (g2, report) = augment(&g, &h, &[cand], &[vec![], vec![1]]).unwrap();
        assert_eq!(report.added.len(), 1);
        assert_eq!(report.added[0].anchor, 1);
        assert!(g2.has_edge(0, 1));
    }

    #[test]
    fn orthogonal_candidate_is_rejected() {
        let g = build_graph(&[(1, 2)], 3).unwrap();
        let h = probs(&[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.1]]);
        let cand = Candidate { node: 0, top1: 0, top2: 1, top2_prob: 0.4 };
        let (g2, report) = augment(&g, &h, &[cand], &[vec![], vec![1]]).unwrap();
        assert!(report.added.is_empty());
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(g2, g);
    }

    #[test]
    fn empty_pool_is_skipped() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let h = probs(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let cand = Candidate { node: 0, top1: 0, top2: 1, top2_prob: 0.4 };
        let (_, report) = augment(&g, &h, &[cand], &[vec![1], vec![]]).unwrap();
        assert_eq!(report.skipped, vec![(0, 1)]);
        // A candidate is never its own anchor.
        let (_, report) = augment(&g, &h, &[cand], &[vec![], vec![0]]).unwrap();
        assert_eq!(report.skipped, vec![(0, 1)]);
    }

    #[test]
    fn anchor_ties_pick_lowest_id() {
        let h = probs(&[&[1.0, 0.0], &[2.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(best_anchor(&h, 0, &[3, 2, 1]), Some((1, 1.0)));
    }
}
