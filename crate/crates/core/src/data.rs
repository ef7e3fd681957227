//! Dataset files and train/validation/test split protocols.
//!
//! File formats (all plain text, `#` starts a comment line):
//!
//! * edges: one `u v` pair per line, whitespace separated;
//! * features: `node_id,x0,x1,...`, one row per node in any order;
//! * labels: `node_id,label`, optionally preceded by a header line.
//!
//! Node ids must cover `0..n` exactly once in the features file.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::graph::{build_graph, read_edge_list, SparseGraph};
use crate::{rng_from_seed, DenseMatrix, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(graph: SparseGraph, features: DenseMatrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != graph.n() || labels.len() != graph.n() {
            return Err(Error::Data(format!(
                "graph has {} nodes but there are {} feature rows and {} labels",
                graph.n(),
                features.rows(),
                labels.len()
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(Self {
            graph,
            features,
            labels,
            num_classes,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Data(format!("cannot open {}: {e}", path.display()))
    })?))
}

fn parse_err(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Comma-separated rows keyed by an integer id in the first column. A first
/// data line whose id does not parse is taken as a header.
fn parse_keyed_rows(reader: impl BufRead, source: &str) -> Result<Vec<(usize, usize, Vec<String>)>> {
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split(',').map(|f| f.trim().to_string());
        let id_tok = fields.next().unwrap_or_default();
        match id_tok.parse::<usize>() {
            Ok(id) => {
                seen_data = true;
                rows.push((lineno, id, fields.collect()));
            }
            Err(_) if !seen_data && rows.is_empty() => seen_data = true,
            Err(_) => return Err(parse_err(source, lineno, format!("bad node id {id_tok:?}"))),
        }
    }
    Ok(rows)
}

/// Features keyed by node id; row `i` of the result belongs to node `i`.
pub fn parse_features(reader: impl BufRead, source: &str) -> Result<DenseMatrix> {
    let rows = parse_keyed_rows(reader, source)?;
    let n = rows.len();
    if n == 0 {
        return Err(Error::Data(format!("{source}: no feature rows")));
    }
    let dim = rows[0].2.len();
    if dim == 0 {
        return Err(parse_err(source, rows[0].0, "row has no feature values"));
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; n];
    for (lineno, id, fields) in rows {
        if fields.len() != dim {
            return Err(parse_err(
                source,
                lineno,
                format!("expected {dim} feature values, found {}", fields.len()),
            ));
        }
        if id >= n {
            return Err(parse_err(
                source,
                lineno,
                format!("node id {id} outside 0..{n} (ids must be contiguous)"),
            ));
        }
        if slots[id].is_some() {
            return Err(parse_err(source, lineno, format!("duplicate node id {id}")));
        }
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(source, lineno, format!("bad feature value {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        slots[id] = Some(values);
    }
    let data: Vec<f64> = slots.into_iter().flat_map(|r| r.expect("every id filled")).collect();
    DenseMatrix::from_vec(n, dim, data)
}

/// Labels keyed by node id for nodes `0..n`.
pub fn parse_labels(reader: impl BufRead, source: &str, n: usize) -> Result<Vec<usize>> {
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut count = 0;
    for (lineno, id, fields) in parse_keyed_rows(reader, source)? {
        if fields.len() != 1 {
            return Err(parse_err(source, lineno, "expected `node_id,label`"));
        }
        let y: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(source, lineno, format!("bad label {:?}", fields[0])))?;
        if id >= n {
            return Err(parse_err(source, lineno, format!("unknown node id {id}")));
        }
        if labels[id].replace(y).is_some() {
            return Err(parse_err(source, lineno, format!("duplicate node id {id}")));
        }
        count += 1;
    }
    if count != n {
        return Err(Error::Data(format!(
            "{source}: {count} labels for {n} feature rows"
        )));
    }
    Ok(labels.into_iter().map(|y| y.expect("count checked")).collect())
}

/// Builds a dataset from already-parsed parts, rejecting edges that name
/// unknown nodes.
pub fn assemble(edges: &[(usize, usize)], features: DenseMatrix, labels: Vec<usize>) -> Result<Dataset> {
    let n = features.rows();
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
        let id = if u >= n { u } else { v };
        return Err(Error::Data(format!(
            "edge ({u}, {v}) references unknown node id {id}"
        )));
    }
    Dataset::new(build_graph(edges, n)?, features, labels)
}

/// Graph and features without labels, with the same id checks as [`load_dataset`].
pub fn load_graph_features(edge_path: &Path, feature_path: &Path) -> Result<(SparseGraph, DenseMatrix)> {
    let features = parse_features(open(feature_path)?, &feature_path.display().to_string())?;
    let n = features.rows();
    let ds = assemble(&read_edge_list(edge_path)?, features, vec![0; n])?;
    Ok((ds.graph, ds.features))
}

pub fn load_dataset(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<Dataset> {
    let features = parse_features(open(feature_path)?, &feature_path.display().to_string())?;
    let labels = parse_labels(
        open(label_path)?,
        &label_path.display().to_string(),
        features.rows(),
    )?;
    let edges = read_edge_list(edge_path)?;
    assemble(&edges, features, labels)
}

pub fn write_features_csv(x: &DenseMatrix, mut out: impl Write) -> Result<()> {
    for i in 0..x.rows() {
        write!(out, "{i}")?;
        for v in x.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Same layout as the features file, with a `node_id,e0,e1,...` header.
pub fn write_embeddings_csv(h: &DenseMatrix, mut out: impl Write) -> Result<()> {
    write!(out, "node_id")?;
    for j in 0..h.cols() {
        write!(out, ",e{j}")?;
    }
    writeln!(out)?;
    write_features_csv(h, out)
}

pub fn write_labels_csv(labels: &[usize], mut out: impl Write) -> Result<()> {
    writeln!(out, "node_id,label")?;
    for (i, y) in labels.iter().enumerate() {
        writeln!(out, "{i},{y}")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Fixed per-class train/val/test counts.
    Step,
    /// Per-class 1:1:2 train/val/test proportions.
    Ratio,
    /// Per-class 10%/40%/50% train/val/test proportions.
    Fraction,
}

impl std::str::FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Self::Step),
            "ratio" => Ok(Self::Ratio),
            "fraction" => Ok(Self::Fraction),
            _ => Err(Error::InvalidParameter(format!(
                "unknown split strategy {s:?} (expected step, ratio or fraction)"
            ))),
        }
    }
}

impl std::fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Step => "step",
            Self::Ratio => "ratio",
            Self::Fraction => "fraction",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub per_class_train: usize,
    pub per_class_val: usize,
    pub per_class_test: usize,
    /// Minority classes keep `⌈train·ρ⌉` training nodes.
    pub rho: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            per_class_train: 20,
            per_class_val: 25,
            per_class_test: 55,
            rho: 0.5,
            seed: 0,
            strategy: SplitStrategy::Step,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_class_train == 0 || self.per_class_val == 0 || self.per_class_test == 0 {
            return Err(Error::InvalidParameter("per-class split counts must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    pub minority_classes: Vec<usize>,
}

impl Split {
    pub fn count(mask: &[bool]) -> usize {
        mask.iter().filter(|&&m| m).count()
    }
}

/// Number of minority classes under the "last half" convention.
pub fn num_minority(num_classes: usize) -> usize {
    num_classes.div_ceil(2)
}

/// `⌈count·ρ⌉`, at least one. The small slack keeps products such as
/// `20 × 0.15` from rounding up past their exact value.
pub fn downsampled(count: usize, rho: f64) -> usize {
    ((count as f64 * rho - 1e-9).ceil() as usize).clamp(1, count.max(1))
}

/// Per-class train/val/test masks. The last `⌈C/2⌉` class ids are minority
/// and have their training share downsampled by `ρ`.
pub fn make_step_split(labels: &[usize], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    if num_classes < 2 {
        return Err(Error::InvalidParameter("a split needs at least two classes".into()));
    }
    let first_minority = num_classes - num_minority(num_classes);
    let mut members = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }

    let mut rng = rng_from_seed(spec.seed);
    let mut split = Split {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
        minority_classes: (first_minority..num_classes).collect(),
    };
    for (c, nodes) in members.iter_mut().enumerate() {
        let size = nodes.len();
        let (train, val, test) = match spec.strategy {
            SplitStrategy::Step => (spec.per_class_train, spec.per_class_val, spec.per_class_test),
            SplitStrategy::Ratio => proportional(size, 0.25, 0.25),
            SplitStrategy::Fraction => proportional(size, 0.10, 0.40),
        };
        let train = if c >= first_minority {
            downsampled(train, spec.rho)
        } else {
            train
        };
        let required = train + val + test;
        if size < required || train == 0 || val == 0 || test == 0 {
            return Err(Error::ClassTooSmall {
                class: c,
                available: size,
                required: required.max(3),
            });
        }
        nodes.shuffle(&mut rng);
        for &i in &nodes[..train] {
            split.train[i] = true;
        }
        for &i in &nodes[train..train + val] {
            split.val[i] = true;
        }
        for &i in &nodes[train + val..required] {
            split.test[i] = true;
        }
    }
    Ok(split)
}

/// `node_id,split` rows with `train`, `val`, `test` or `none`.
pub fn write_split_csv(split: &Split, mut out: impl Write) -> Result<()> {
    writeln!(out, "node_id,split")?;
    for i in 0..split.train.len() {
        let tag = if split.train[i] {
            "train"
        } else if split.val[i] {
            "val"
        } else if split.test[i] {
            "test"
        } else {
            "none"
        };
        writeln!(out, "{i},{tag}")?;
    }
    Ok(())
}

/// Reads masks written by [`write_split_csv`] for a graph with `n` nodes and
/// `num_classes` classes.
pub fn parse_split(reader: impl BufRead, source: &str, n: usize, num_classes: usize) -> Result<Split> {
    let mut split = Split {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
        minority_classes: (num_classes - num_minority(num_classes)..num_classes).collect(),
    };
    for (lineno, id, fields) in parse_keyed_rows(reader, source)? {
        if id >= n {
            return Err(parse_err(source, lineno, format!("unknown node id {id}")));
        }
        match fields.first().map(String::as_str) {
            Some("train") => split.train[id] = true,
            Some("val") => split.val[id] = true,
            Some("test") => split.test[id] = true,
            Some("none") => {}
            _ => return Err(parse_err(source, lineno, "expected train, val, test or none")),
        }
    }
    Ok(split)
}

pub fn read_split(path: &Path, n: usize, num_classes: usize) -> Result<Split> {
    parse_split(open(path)?, &path.display().to_string(), n, num_classes)
}

/// Rounded train/val counts with the remainder as test.
fn proportional(size: usize, train_frac: f64, val_frac: f64) -> (usize, usize, usize) {
    let train = (size as f64 * train_frac).round() as usize;
    let val = (size as f64 * val_frac).round() as usize;
    (train, val, size.saturating_sub(train + val))
}
