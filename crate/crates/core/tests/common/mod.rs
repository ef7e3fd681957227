#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use structbal::classifier::{Pipeline, SbParams};
use structbal::data::{Dataset, SplitSpec};
use structbal::dense::softmax_rows;
use structbal::diffusion::{diffuse, DiffusionConfig, Mode};
use structbal::encoder::{cosine_sim, init_encoder, loss_and_grads};
use structbal::enhance::{augment, mine_initial, neighbor_consensus, ClassPartition};
use structbal::graph::{build_graph, normalize_sym, perturb_edges};
use structbal::sbm::{class_conditional_features, generate_sbm, SbmConfig};
use structbal::{DenseMatrix, SparseGraph};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Erdős–Rényi graph by brute-force pair enumeration.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SparseGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    build_graph(&edges, n).unwrap()
}

/// Dense `D̃^{-1/2}(A+I)D̃^{-1/2}` computed from scratch.
pub fn dense_norm_adj(g: &SparseGraph) -> DenseMatrix {
    let n = g.n();
    let mut a = DenseMatrix::identity(n);
    for (u, v, w) in g.edges() {
        a.as_mut_slice()[u * n + v] = w;
        a.as_mut_slice()[v * n + u] = w;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt())
}

pub fn dense_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

/// Max-abs gap between iterative diffusion and `(αÂ+(1−α)I)^K Z⁰` for one
/// random instance with `n ≤ 16`, `K ≤ 8`.
pub fn diffusion_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=16);
    let k = r.random_range(0..=8);
    let alpha = r.random_range(0.01..0.99);
    let density = r.random_range(0.0..0.8);
    let g = random_graph(&mut r, n, density);
    let cols = r.random_range(1..=4);
    let z0 = random_matrix(&mut r, n, cols);

    let a = dense_norm_adj(&g);
    let step = DenseMatrix::from_fn(n, n, |i, j| {
        alpha * a[(i, j)] + if i == j { 1.0 - alpha } else { 0.0 }
    });
    let mut power = DenseMatrix::identity(n);
    for _ in 0..k {
        power = dense_matmul(&power, &step);
    }
    let expect = dense_matmul(&power, &z0);
    diffuse(&normalize_sym(&g), &z0, alpha, k).unwrap().max_abs_diff(&expect)
}

/// Largest entrywise z-score of the Monte Carlo mean of perturbed entries
/// against `Â`, using the exact per-entry standard error.
pub fn perturbation_max_z(g: &SparseGraph, p_drop: f64, samples: usize, seed: u64) -> f64 {
    let a = normalize_sym(g);
    let dense = a.to_dense();
    let n = g.n();
    let mut sum = DenseMatrix::zeros(n, n);
    for s in 0..samples {
        let pert = perturb_edges(&a, p_drop, seed.wrapping_mul(1_000_003).wrapping_add(s as u64)).unwrap();
        sum.axpy(1.0, &pert.to_dense()).unwrap();
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mean = sum[(i, j)] / samples as f64;
            let target = dense[(i, j)];
            let se = if i == j {
                0.0
            } else {
                target.abs() * (p_drop / (1.0 - p_drop) / samples as f64).sqrt()
            };
            let z = if se == 0.0 {
                if (mean - target).abs() < 1e-12 { 0.0 } else { f64::INFINITY }
            } else {
                (mean - target).abs() / se
            };
            worst = worst.max(z);
        }
    }
    worst
}

pub struct SoundnessOutcome {
    pub violations: Vec<String>,
    pub added: usize,
    pub candidates: usize,
}

/// Random structure-enhancement instance checked against a brute-force
/// re-evaluation of every decision.
pub fn se_soundness(seed: u64) -> SoundnessOutcome {
    let mut r = rng(seed);
    let n = r.random_range(8..=30);
    let num_classes = r.random_range(2..=4);
    let density = r.random_range(0.05..0.4);
    let g = random_graph(&mut r, n, density);
    let dim = r.random_range(2..=4);
    let h = random_matrix(&mut r, n, dim);
    let logits = random_matrix(&mut r, n, num_classes);
    let p_self = softmax_rows(&logits);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..num_classes)).collect();
    let train: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.5).collect();
    let xi = r.random_range(0.0..0.45);
    let partition = ClassPartition::last_half(num_classes).unwrap();
    let is_mi = |c: usize| partition.is_minority(c);

    let a = normalize_sym(&g);
    let init = mine_initial(&p_self, &partition, xi).unwrap();
    let set = neighbor_consensus(&a, &p_self, &init, &partition).unwrap();
    let mut pools = vec![Vec::new(); num_classes];
    for i in 0..n {
        if train[i] {
            pools[labels[i]].push(i);
        }
    }
    let (g_aug, report) = augment(&g, &h, &set.s_cand, &pools).unwrap();

    let mut violations = Vec::new();
    // Independent recomputation of both candidate filters.
    let ad = dense_norm_adj(&g);
    let mi: Vec<usize> = (0..num_classes).filter(|&c| is_mi(c)).collect();
    let ma: Vec<usize> = (0..num_classes).filter(|&c| !is_mi(c)).collect();
    let mut expect_cand = Vec::new();
    for u in 0..n {
        let row = p_self.row(u);
        let mut order: Vec<usize> = (0..num_classes).collect();
        order.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
        let (t1, t2) = (order[0], order[1]);
        if !(!is_mi(t1) && is_mi(t2) && row[t2] > xi) {
            continue;
        }
        let pn: Vec<f64> = (0..num_classes)
            .map(|c| (0..n).map(|v| ad[(u, v)] * p_self[(v, c)]).sum())
            .collect();
        let mean = |cs: &[usize]| cs.iter().map(|&c| pn[c]).sum::<f64>() / cs.len() as f64;
        if mean(&mi) > mean(&ma) {
            expect_cand.push((u, t2));
        }
    }
    let got: Vec<(usize, usize)> = set.s_cand.iter().map(|c| (c.node, c.top2)).collect();
    if got != expect_cand {
        violations.push(format!("candidate set {got:?} != oracle {expect_cand:?}"));
    }

    let tau = |v: usize| {
        let nb = g.neighbors(v);
        if nb.is_empty() {
            -1.0
        } else {
            nb.iter().map(|&w| cosine_sim(h.row(v), h.row(w))).sum::<f64>() / nb.len() as f64
        }
    };
    for e in &report.added {
        let c_star = expect_cand.iter().find(|c| c.0 == e.candidate).map(|c| c.1);
        if c_star.is_none() {
            violations.push(format!("edge from non-candidate {}", e.candidate));
            continue;
        }
        if !train[e.anchor] || Some(labels[e.anchor]) != c_star {
            violations.push(format!("anchor {} not a class-c* training node", e.anchor));
        }
        let sim = cosine_sim(h.row(e.candidate), h.row(e.anchor));
        if !(sim > tau(e.anchor)) {
            violations.push(format!("edge ({}, {}) fails the gate", e.candidate, e.anchor));
        }
        let best = (0..n)
            .filter(|&v| v != e.candidate && train[v] && Some(labels[v]) == c_star)
            .map(|v| cosine_sim(h.row(e.candidate), h.row(v)))
            .fold(f64::NEG_INFINITY, f64::max);
        if sim < best {
            violations.push(format!("anchor {} is not the most similar", e.anchor));
        }
        if !g_aug.has_edge(e.candidate, e.anchor) {
            violations.push(format!("edge ({}, {}) missing from graph", e.candidate, e.anchor));
        }
    }
    for e in &report.rejected {
        if cosine_sim(h.row(e.candidate), h.row(e.anchor)) > tau(e.anchor) {
            violations.push(format!("edge ({}, {}) wrongly rejected", e.candidate, e.anchor));
        }
    }
    if report.added.len() + report.rejected.len() + report.skipped.len() != expect_cand.len() {
        violations.push("some candidates were not decided".into());
    }
    SoundnessOutcome {
        violations,
        added: report.added.len(),
        candidates: expect_cand.len(),
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Relative errors of encoder gradients at 10 random coordinates.
pub fn encoder_fd_errors(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let n = r.random_range(4..=10);
    let (p0, d, c) = (r.random_range(2..=5), r.random_range(2..=6), r.random_range(2..=4));
    let x = random_matrix(&mut r, n, p0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.7).collect();
    mask[0] = true;
    let mut params = init_encoder(p0, d, c, seed).unwrap();
    params.b1.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
    let (_, grads) = loss_and_grads(&params, &x, &labels, &mask).unwrap();

    let eps = 1e-6;
    (0..10)
        .map(|_| {
            let block = r.random_range(0..4);
            let (len, analytic) = match block {
                0 => (grads.w1.as_slice().len(), grads.w1.as_slice()),
                1 => (grads.b1.len(), grads.b1.as_slice()),
                2 => (grads.w2.as_slice().len(), grads.w2.as_slice()),
                _ => (grads.b2.len(), grads.b2.as_slice()),
            };
            let k = r.random_range(0..len);
            let eval = |delta: f64| {
                let mut p = params.clone();
                match block {
                    0 => p.w1.as_mut_slice()[k] += delta,
                    1 => p.b1[k] += delta,
                    2 => p.w2.as_mut_slice()[k] += delta,
                    _ => p.b2[k] += delta,
                }
                loss_and_grads(&p, &x, &labels, &mask).unwrap().0
            };
            rel_error(analytic[k], (eval(eps) - eval(-eps)) / (2.0 * eps))
        })
        .collect()
}

/// Relative errors of the joint diffusion + classifier gradients at 10
/// random coordinates, with dropout masks frozen by a fixed seed.
pub fn pipeline_fd_errors(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let n = r.random_range(5..=10);
    let p0 = r.random_range(2..=4);
    let c = r.random_range(2..=3);
    let g = random_graph(&mut r, n, 0.4);
    let a = normalize_sym(&g);
    let x = random_matrix(&mut r, n, p0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.7).collect();
    mask[0] = true;
    let cfg = DiffusionConfig {
        k: r.random_range(1..=4),
        alpha: 0.15,
        p_drop: 0.2,
        p_feat: 0.2,
        d_out: r.random_range(2..=5),
    };
    let mut params = SbParams::init(p0, &cfg, c, seed).unwrap();
    params.diffusion.b.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
    let pipe = Pipeline { a: &a, x: &x, cfg: &cfg };
    let fwd_seed = r.random::<u64>();
    let (_, grads) = pipe.loss_and_grads(&params, &labels, &mask, fwd_seed, Mode::Train).unwrap();

    let eps = 1e-6;
    (0..10)
        .map(|_| {
            let block = r.random_range(0..4);
            let len = grads.blocks()[block].len();
            let k = r.random_range(0..len);
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.blocks_mut()[block][k] += delta;
                pipe.loss_and_grads(&p, &labels, &mask, fwd_seed, Mode::Train).unwrap().0
            };
            rel_error(grads.blocks()[block][k], (eval(eps) - eval(-eps)) / (2.0 * eps))
        })
        .collect()
}

/// Two-block SBM with Gaussian class-conditional features.
pub fn sbm_dataset(cfg: &SbmConfig, dim: usize, centroid_distance: f64, seed: u64) -> Dataset {
    let (g, labels) = generate_sbm(cfg, seed).unwrap();
    let x = class_conditional_features(&labels, dim, centroid_distance, seed ^ 0x5eed).unwrap();
    Dataset::new(g, x, labels).unwrap()
}

/// Split used for the 550-node benchmark graph: the 50-node minority block
/// cannot host the default 20/25/55 per-class counts.
pub fn small_split() -> SplitSpec {
    SplitSpec {
        per_class_train: 20,
        per_class_val: 10,
        per_class_test: 30,
        rho: 0.5,
        ..SplitSpec::default()
    }
}
