//! Undirected CSR graphs and their symmetrically normalised adjacency.
//!
//! [`SparseGraph`] stores both directions of every undirected edge with
//! columns sorted ascending inside each row, so two graphs with the same edge
//! set compare equal. Self-loops are never stored; [`normalize_sym`] adds them
//! back when it forms `D̃^{-1/2}(A + I)D̃^{-1/2}`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::{rng_from_seed, DenseMatrix, Error, Result};

/// Work (stored entries × columns) above which `spmm` splits rows across threads.
const PAR_SPMM_WORK: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weight: Vec<f64>,
}

impl SparseGraph {
    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            weight: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    pub fn neighbor_weights(&self, u: usize) -> &[f64] {
        &self.weight[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    pub fn weighted_degree(&self, u: usize) -> f64 {
        self.neighbor_weights(u).iter().sum()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .zip(self.neighbor_weights(u))
                .filter(move |(&v, _)| v > u)
                .map(move |(&v, &w)| (u, v, w))
        })
    }

    /// Checks the CSR invariants: bounds, sorted unique rows, symmetry, no self-loops.
    pub fn validate(&self) -> bool {
        if self.row_ptr.len() != self.n + 1
            || self.row_ptr[0] != 0
            || self.row_ptr[self.n] != self.col_idx.len()
            || self.col_idx.len() != self.weight.len()
            || self.row_ptr.windows(2).any(|w| w[0] > w[1])
        {
            return false;
        }
        (0..self.n).all(|u| {
            let nb = self.neighbors(u);
            nb.windows(2).all(|w| w[0] < w[1])
                && nb.iter().zip(self.neighbor_weights(u)).all(|(&v, &w)| {
                    v < self.n
                        && v != u
                        && match self.neighbors(v).binary_search(&u) {
                            Ok(k) => self.neighbor_weights(v)[k] == w,
                            Err(_) => false,
                        }
                })
        })
    }
}

/// Builds an unweighted graph. Input is symmetrised and deduplicated; self-loops are dropped.
pub fn build_graph(edges: &[(usize, usize)], n: usize) -> Result<SparseGraph> {
    let weighted: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
    build_weighted_graph(&weighted, n)
}

/// Weighted variant of [`build_graph`]. The first occurrence of an unordered pair fixes its weight.
pub fn build_weighted_graph(edges: &[(usize, usize, f64)], n: usize) -> Result<SparseGraph> {
    let mut entries = Vec::with_capacity(edges.len() * 2);
    for (index, &(u, v, w)) in edges.iter().enumerate() {
        if u >= n || v >= n {
            return Err(Error::NodeOutOfRange { index, u, v, n });
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "edge {index} ({u}, {v}) has non-positive or non-finite weight {w}"
            )));
        }
        if u == v {
            continue;
        }
        entries.push((u, v, w));
        entries.push((v, u, w));
    }
    // Stable: among duplicates the earliest input edge survives in both rows.
    entries.sort_by_key(|&(r, c, _)| (r, c));
    entries.dedup_by_key(|&mut (r, c, _)| (r, c));

    let mut row_ptr = vec![0usize; n + 1];
    for &(r, _, _) in &entries {
        row_ptr[r + 1] += 1;
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    let (col_idx, weight) = entries.into_iter().map(|(_, c, w)| (c, w)).unzip();
    Ok(SparseGraph {
        n,
        row_ptr,
        col_idx,
        weight,
    })
}

/// Returns `g` with `new_edges` inserted symmetrically (unit weight). Existing edges keep their weight.
pub fn add_edges(g: &SparseGraph, new_edges: &[(usize, usize)]) -> Result<SparseGraph> {
    let mut all: Vec<(usize, usize, f64)> = g.edges().collect();
    for (i, &(u, v)) in new_edges.iter().enumerate() {
        if u >= g.n || v >= g.n {
            return Err(Error::NodeOutOfRange {
                index: i,
                u,
                v,
                n: g.n,
            });
        }
        all.push((u, v, 1.0));
    }
    build_weighted_graph(&all, g.n)
}

/// Symmetrically normalised adjacency with self-loops, `D̃^{-1/2}(A + I)D̃^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormAdj {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    val: Vec<f64>,
}

impl NormAdj {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.val[s..e])
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// `Â x` for a single vector.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::dims("NormAdj::apply_vec", self.n, x.len()));
        }
        Ok((0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect())
    }
}

pub fn normalize_sym(g: &SparseGraph) -> NormAdj {
    let n = g.n;
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| 1.0 / (1.0 + g.weighted_degree(u)).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(g.col_idx.len() + n);
    let mut val = Vec::with_capacity(g.col_idx.len() + n);
    row_ptr.push(0);
    for u in 0..n {
        let mut self_done = false;
        for (&v, &w) in g.neighbors(u).iter().zip(g.neighbor_weights(u)) {
            if !self_done && v > u {
                col_idx.push(u);
                val.push(inv_sqrt[u] * inv_sqrt[u]);
                self_done = true;
            }
            col_idx.push(v);
            val.push(w * inv_sqrt[u] * inv_sqrt[v]);
        }
        if !self_done {
            col_idx.push(u);
            val.push(inv_sqrt[u] * inv_sqrt[u]);
        }
        row_ptr.push(col_idx.len());
    }
    NormAdj {
        n,
        row_ptr,
        col_idx,
        val,
    }
}

/// Sparse × dense product `a · z`. Each output row is accumulated in stored-column
/// order, so the result does not depend on how rows are split across threads.
pub fn spmm(a: &NormAdj, z: &DenseMatrix) -> Result<DenseMatrix> {
    if z.rows() != a.n {
        return Err(Error::dims(
            "spmm",
            format!("{} rows", a.n),
            format!("{} rows", z.rows()),
        ));
    }
    let cols = z.cols();
    let mut out = DenseMatrix::zeros(a.n, cols);
    if cols == 0 {
        return Ok(out);
    }
    let row_kernel = |i: usize, o: &mut [f64]| {
        let (idx, vals) = a.row(i);
        for (&j, &v) in idx.iter().zip(vals) {
            for (oj, &zj) in o.iter_mut().zip(z.row(j)) {
                *oj += v * zj;
            }
        }
    };
    if a.nnz() * cols >= PAR_SPMM_WORK {
        out.as_mut_slice()
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, o)| row_kernel(i, o));
    } else {
        out.as_mut_slice()
            .chunks_mut(cols)
            .enumerate()
            .for_each(|(i, o)| row_kernel(i, o));
    }
    Ok(out)
}

/// Stochastic edge dropout on a normalised adjacency.
///
/// One Bernoulli(1 − `p_drop`) draw per undirected edge decides both stored
/// directions; survivors are rescaled by `1/(1 − p_drop)` and dropped entries
/// are removed from storage. Diagonal entries are always kept unscaled.
pub fn perturb_edges(a: &NormAdj, p_drop: f64, seed: u64) -> Result<NormAdj> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::InvalidParameter(format!(
            "p_drop must lie in [0, 1), got {p_drop}"
        )));
    }
    if p_drop == 0.0 {
        return Ok(a.clone());
    }
    let mut rng = rng_from_seed(seed);
    let scale = 1.0 / (1.0 - p_drop);
    let mut keep = vec![true; a.nnz()];
    for i in 0..a.n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[k];
            if j <= i {
                continue;
            }
            let kept = rng.random::<f64>() >= p_drop;
            keep[k] = kept;
            let (cols, _) = a.row(j);
            let mirror = cols
                .binary_search(&i)
                .expect("normalised adjacency is symmetric");
            keep[a.row_ptr[j] + mirror] = kept;
        }
    }

    let mut row_ptr = Vec::with_capacity(a.n + 1);
    let mut col_idx = Vec::with_capacity(a.nnz());
    let mut val = Vec::with_capacity(a.nnz());
    row_ptr.push(0);
    #[allow(clippy::needless_range_loop)]
    for i in 0..a.n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            if !keep[k] {
                continue;
            }
            let j = a.col_idx[k];
            col_idx.push(j);
            val.push(if j == i { a.val[k] } else { a.val[k] * scale });
        }
        row_ptr.push(col_idx.len());
    }
    Ok(NormAdj {
        n: a.n,
        row_ptr,
        col_idx,
        val,
    })
}

/// Parses the edge-list text format: one whitespace-separated `u v` pair per line,
/// 0-based ids, `#` starts a comment.
pub fn parse_edge_list(reader: impl BufRead, source: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: source.to_string(),
            line: lineno + 1,
            msg,
        };
        let mut fields = content.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected `u v`, got `{content}`")));
        };
        let u = a
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad node id `{a}`: {e}")))?;
        let v = b
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad node id `{b}`: {e}")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = std::fs::File::open(path)?;
    parse_edge_list(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes each undirected edge once, `u < v`.
pub fn write_edge_list(g: &SparseGraph, mut out: impl Write) -> Result<()> {
    writeln!(out, "# {} nodes, {} undirected edges", g.n(), g.num_edges())?;
    for (u, v, _) in g.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}
