mod common;

use std::collections::BTreeSet;
use std::fs;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use structbal::classifier::{Pipeline, SbParams, TrainConfig};
use structbal::config::ExperimentConfig;
use structbal::data::{load_dataset, make_step_split, write_features_csv, write_labels_csv};
use structbal::diffusion::{DiffusionConfig, Mode};
use structbal::encoder::{cosine_sim, init_encoder, predict, train_encoder};
use structbal::enhance::{
    anchor_threshold, augment, mine_initial, neighbor_consensus, neighbor_prediction, Candidate,
    ClassPartition,
};
use structbal::experiment::run_experiment;
use structbal::graph::{build_graph, normalize_sym};
use structbal::sbm::SbmConfig;
use structbal::DenseMatrix;

use common::*;

fn rows(r: &[[f64; 2]]) -> DenseMatrix {
    DenseMatrix::from_fn(r.len(), 2, |i, j| r[i][j])
}

#[test]
fn neighbor_consensus_on_path() {
    // Path 0-1-2-3-4-5, class 1 is the minority.
    let g = build_graph(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], 6).unwrap();
    let a = normalize_sym(&g);
    let p = rows(&[[0.95, 0.05], [0.2, 0.8], [0.6, 0.4], [0.2, 0.8], [0.7, 0.3], [0.9, 0.1]]);
    let part = ClassPartition::new(2, [1]).unwrap();

    let init = mine_initial(&p, &part, 0.25).unwrap();
    let ids: Vec<usize> = init.s_init.iter().map(|c| c.node).collect();
    assert_eq!(ids, vec![2, 4]);

    // Node 2 and both neighbours have augmented degree 3.
    let pn2 = neighbor_prediction(&a, &p, 2);
    assert!((pn2[0] - 1.0 / 3.0).abs() < 1e-12 && (pn2[1] - 2.0 / 3.0).abs() < 1e-12);
    // Node 4 has degree 3, neighbour 5 has degree 2.
    let w45 = 1.0 / 6f64.sqrt();
    let pn4 = neighbor_prediction(&a, &p, 4);
    assert!((pn4[0] - (0.7 / 3.0 + 0.2 / 3.0 + 0.9 * w45)).abs() < 1e-12);
    assert!((pn4[1] - (0.3 / 3.0 + 0.8 / 3.0 + 0.1 * w45)).abs() < 1e-12);

    let set = neighbor_consensus(&a, &p, &init, &part).unwrap();
    assert_eq!(set.s_cand.iter().map(|c| c.node).collect::<Vec<_>>(), vec![2]);
}

#[test]
fn anchor_threshold_is_mean_neighbour_cosine() {
    let g = build_graph(&[(0, 1), (0, 2), (0, 3), (0, 4)], 5).unwrap();
    let h = rows(&[[1.0, 0.0], [2.0, 0.0], [0.0, 3.0], [-1.0, 0.0], [1.0, 3f64.sqrt()]]);
    assert!((anchor_threshold(&g, &h, 0) - 0.125).abs() < 1e-12);
    assert!((anchor_threshold(&g, &h, 3) + 1.0).abs() < 1e-12);
}

#[test]
fn augment_matches_brute_force() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 8, 0.35);
        let h = random_matrix(&mut r, 8, 3);
        let pools = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7]];
        let mut cands = Vec::new();
        for node in 0..8 {
            if r.random_bool(0.5) {
                cands.push(Candidate { node, top1: 0, top2: r.random_range(1..3), top2_prob: 0.3 });
            }
        }

        let mut expected = BTreeSet::new();
        for c in &cands {
            let mut best: Option<(usize, f64)> = None;
            for &v in &pools[c.top2] {
                let s = cosine_sim(h.row(c.node), h.row(v));
                if v != c.node && best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((v, s));
                }
            }
            let Some((v, s)) = best else { continue };
            let nb = g.neighbors(v);
            let tau = if nb.is_empty() {
                -1.0
            } else {
                nb.iter().map(|&w| cosine_sim(h.row(v), h.row(w))).sum::<f64>() / nb.len() as f64
            };
            if s > tau {
                expected.insert((c.node.min(v), c.node.max(v)));
            }
        }

        let (g2, report) = augment(&g, &h, &cands, &pools).unwrap();
        let got: BTreeSet<_> = report
            .added
            .iter()
            .map(|e| (e.candidate.min(e.anchor), e.candidate.max(e.anchor)))
            .collect();
        assert_eq!(got, expected, "seed {seed}");
        let mut all: Vec<_> = (0..8).flat_map(|u| g.neighbors(u).iter().map(move |&v| (u, v))).collect();
        all.extend(expected.iter().copied());
        assert_eq!(g2, build_graph(&all, 8).unwrap());
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    for seed in 0..5 {
        let worst = encoder_fd_errors(seed).into_iter().fold(0.0, f64::max);
        assert!(worst < 1e-5, "seed {seed}: {worst}");
    }
}

#[test]
fn pipeline_gradients_match_finite_differences() {
    for seed in 0..5 {
        let worst = pipeline_fd_errors(seed).into_iter().fold(0.0, f64::max);
        assert!(worst < 1e-5, "seed {seed}: {worst}");
    }
}

#[test]
fn encoder_separates_gaussian_blobs() {
    let mut r = rng(11);
    let centres = [[4.0, 0.0], [-4.0, 2.0], [0.0, -4.0]];
    let labels: Vec<usize> = (0..150).map(|i| i % 3).collect();
    let x = DenseMatrix::from_fn(150, 2, |i, j| {
        centres[labels[i]][j] + r.sample::<f64, _>(StandardNormal)
    });
    let mask = vec![true; 150];
    let params = train_encoder(init_encoder(2, 16, 3, 5).unwrap(), &x, &labels, &mask, 200, 0.2).unwrap();
    let pred = predict(&params, &x).unwrap();
    let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / 150.0;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn joint_training_fits_separable_sbm() {
    let ds = sbm_dataset(&SbmConfig::new(200, 100, 0.05, 0.005).unwrap(), 8, 3.0, 21);
    let a = normalize_sym(&ds.graph);
    let cfg = DiffusionConfig::default();
    let pipeline = Pipeline { a: &a, x: &ds.features, cfg: &cfg };
    let split = make_step_split(&ds.labels, &small_split()).unwrap();
    let hp = TrainConfig { epochs: 300, seed: 1, ..TrainConfig::default() };
    let init = SbParams::init(8, &cfg, 2, 1).unwrap();
    let params = structbal::classifier::train(&pipeline, init, &ds.labels, &split.train, &hp).unwrap();
    let (probs, _) = pipeline.forward(&params, 0, Mode::Eval).unwrap();
    let train_nodes: Vec<usize> = (0..ds.n()).filter(|&i| split.train[i]).collect();
    let correct = train_nodes
        .iter()
        .filter(|&&i| structbal::dense::argmax(probs.row(i)) == ds.labels[i])
        .count();
    let acc = correct as f64 / train_nodes.len() as f64;
    assert!(acc >= 0.9, "training accuracy {acc}");
}

#[test]
fn shuffled_files_load_identically() {
    let ds = sbm_dataset(&SbmConfig::new(30, 10, 0.3, 0.05).unwrap(), 3, 1.0, 4);
    let dir = tempfile::tempdir().unwrap();
    let mut f = Vec::new();
    let mut l = Vec::new();
    write_features_csv(&ds.features, &mut f).unwrap();
    write_labels_csv(&ds.labels, &mut l).unwrap();
    let (f, l) = (String::from_utf8(f).unwrap(), String::from_utf8(l).unwrap());
    let f_lines: Vec<&str> = f.lines().collect();
    let l_lines: Vec<&str> = l.lines().skip(1).collect();
    let mut edges = Vec::new();
    for u in 0..ds.n() {
        for &v in ds.graph.neighbors(u) {
            if u < v {
                edges.push(format!("{u} {v}"));
            }
        }
    }
    let write = |name: &str, shuffle: Option<u64>| {
        let mut order: Vec<usize> = (0..ds.n()).collect();
        let mut edge_lines = edges.clone();
        if let Some(seed) = shuffle {
            order.shuffle(&mut rng(seed));
            edge_lines.shuffle(&mut rng(seed + 1));
        }
        let fo: String = order.iter().map(|&i| format!("{}\n", f_lines[i])).collect();
        let lo: String = order.iter().map(|&i| format!("{}\n", l_lines[i])).collect();
        let e: String = edge_lines.iter().map(|x| format!("{x}\n")).collect();
        let d = dir.path().join(name);
        fs::create_dir(&d).unwrap();
        fs::write(d.join("f.csv"), fo).unwrap();
        fs::write(d.join("l.csv"), format!("node_id,label\n{lo}")).unwrap();
        fs::write(d.join("e.txt"), e).unwrap();
        load_dataset(&d.join("e.txt"), &d.join("f.csv"), &d.join("l.csv")).unwrap()
    };
    let a = write("plain", None);
    let b = write("shuffled", Some(9));
    assert_eq!(a, ds);
    assert_eq!(b, ds);
}

#[test]
fn experiment_is_deterministic_and_aggregates_means() {
    let ds = sbm_dataset(&SbmConfig::new(200, 100, 0.05, 0.005).unwrap(), 8, 1.5, 5);
    let cfg = ExperimentConfig {
        seeds: vec![0, 1, 2],
        split: small_split(),
        encoder_epochs: 40,
        train: TrainConfig { epochs: 30, ..TrainConfig::default() },
        ..ExperimentConfig::default()
    };
    let first = run_experiment(&ds, &cfg).unwrap();
    assert_eq!(first, run_experiment(&ds, &cfg).unwrap());
    let f1: Vec<f64> = first.per_seed.iter().map(|s| s.report.macro_f1).collect();
    let mean = f1.iter().sum::<f64>() / 3.0;
    let std = (f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    let (_, m, s) = first.aggregate.iter().find(|a| a.0 == "macro_f1").unwrap();
    assert!((m - mean).abs() < 1e-12 && (s - std).abs() < 1e-12);

    let ablated = ExperimentConfig { no_se: true, no_rd: true, ..cfg };
    let report = run_experiment(&ds, &ablated).unwrap();
    assert!(report.per_seed.iter().all(|s| s.added_edges == 0));
}
