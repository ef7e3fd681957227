//! Multi-seed experiment driver: split, enhance, diffuse, train, evaluate.

use std::fmt;

use rand::RngCore;
use rayon::prelude::*;

use crate::classifier::{train, Pipeline, SbParams};
use crate::config::ExperimentConfig;
use crate::data::{make_step_split, Dataset, Split, SplitSpec};
use crate::diffusion::{DiffusionConfig, Mode};
use crate::encoder::{init_encoder, train_encoder};
use crate::enhance::{anchors_by_class, structure_enhancement, ClassPartition, Enhancement};
use crate::graph::{normalize_sym, SparseGraph};
use crate::metrics::EvalReport;
use crate::{rng_from_seed, DenseMatrix, Error, Result};

/// Everything one seed produces.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub split: Split,
    pub enhancement: Option<Enhancement>,
    /// Graph the model was trained on (augmented unless SE is disabled).
    pub graph: SparseGraph,
    pub diffusion: DiffusionConfig,
    pub params: SbParams,
    /// Eval-mode class probabilities for every node.
    pub probs: DenseMatrix,
    /// Eval-mode classifier hidden layer for every node.
    pub hidden: DenseMatrix,
    /// Metrics on the test mask.
    pub report: EvalReport,
}

struct SubSeeds {
    encoder: u64,
    model: u64,
    train: u64,
}

fn sub_seeds(seed: u64) -> SubSeeds {
    let mut rng = rng_from_seed(seed);
    SubSeeds {
        encoder: rng.next_u64(),
        model: rng.next_u64(),
        train: rng.next_u64(),
    }
}

/// Trains the feature-view encoder on the training nodes and augments the graph.
pub fn enhance_graph(ds: &Dataset, split: &Split, cfg: &ExperimentConfig, seed: u64) -> Result<Enhancement> {
    let partition = ClassPartition::new(ds.num_classes, split.minority_classes.iter().copied())?;
    let encoder = init_encoder(ds.features.cols(), cfg.encoder_hidden, ds.num_classes, seed)?;
    let encoder = train_encoder(
        encoder,
        &ds.features,
        &ds.labels,
        &split.train,
        cfg.encoder_epochs,
        cfg.encoder_lr,
    )?;
    let anchors = anchors_by_class(&ds.labels, &split.train, ds.num_classes);
    structure_enhancement(&ds.graph, &ds.features, &encoder, &partition, &anchors, cfg.xi)
}

pub fn run_seed(ds: &Dataset, cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let seeds = sub_seeds(seed);
    let split = make_step_split(&ds.labels, &SplitSpec { seed, ..cfg.split })?;

    let enhancement = if cfg.no_se {
        None
    } else {
        Some(enhance_graph(ds, &split, cfg, seeds.encoder)?)
    };
    let graph = enhancement.as_ref().map_or_else(|| ds.graph.clone(), |e| e.graph.clone());
    let diffusion = if cfg.no_rd {
        cfg.diffusion.without_diffusion()
    } else {
        cfg.diffusion
    };

    let a = normalize_sym(&graph);
    let pipeline = Pipeline {
        a: &a,
        x: &ds.features,
        cfg: &diffusion,
    };
    let init = SbParams::init(ds.features.cols(), &diffusion, ds.num_classes, seeds.model)?;
    let hp = crate::classifier::TrainConfig {
        seed: seeds.train,
        ..cfg.train
    };
    let params = train(&pipeline, init, &ds.labels, &split.train, &hp)?;
    let (probs, hidden) = pipeline.forward(&params, 0, Mode::Eval)?;
    let report = EvalReport::compute(&probs, &hidden, &ds.labels, &split.test)?;
    Ok(SeedRun {
        seed,
        split,
        enhancement,
        graph,
        diffusion,
        params,
        probs,
        hidden,
        report,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub report: EvalReport,
    pub added_edges: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub per_seed: Vec<SeedSummary>,
    /// `(key, mean, sample std)` for every report field.
    pub aggregate: Vec<(String, f64, f64)>,
}

impl ExperimentReport {
    pub fn mean(&self, key: &str) -> Option<f64> {
        self.aggregate.iter().find(|(k, _, _)| k == key).map(|a| a.1)
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(per_seed: &[SeedSummary]) -> Vec<(String, f64, f64)> {
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    let keys: Vec<String> = first.report.fields().into_iter().map(|(k, _)| k).collect();
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); keys.len()];
    for s in per_seed {
        for (col, (_, v)) in table.iter_mut().zip(s.report.fields()) {
            col.push(v);
        }
    }
    let mut out: Vec<(String, f64, f64)> = keys
        .into_iter()
        .zip(&table)
        .map(|(k, vals)| {
            let (m, s) = mean_std(vals);
            (k, m, s)
        })
        .collect();
    let added: Vec<f64> = per_seed.iter().map(|s| s.added_edges as f64).collect();
    let (m, s) = mean_std(&added);
    out.push(("added_edges".into(), m, s));
    out
}

/// Runs every configured seed (in parallel) and aggregates the test metrics.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = run_seed(ds, cfg, seed)
                .map_err(|e| Error::Data(format!("seed {seed}: {e}")))?;
            Ok(SeedSummary {
                seed,
                added_edges: run.enhancement.as_ref().map_or(0, |e| e.report.added.len()),
                report: run.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&per_seed);
    Ok(ExperimentReport { per_seed, aggregate })
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.per_seed {
            writeln!(f, "[seed {}]", s.seed)?;
            write!(f, "{}", s.report)?;
            writeln!(f, "added_edges={}", s.added_edges)?;
        }
        writeln!(f, "[aggregate]")?;
        for (k, m, s) in &self.aggregate {
            writeln!(f, "{k}_mean={m:.6}")?;
            writeln!(f, "{k}_std={s:.6}")?;
        }
        Ok(())
    }
}
