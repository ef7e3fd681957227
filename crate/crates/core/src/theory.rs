//! Numerical witnesses for structural imbalance in message passing.
//!
//! Everything here is either a closed form or a small simulation that can be
//! checked against one: the two-class propagation matrix and its subdominant
//! eigenvalue, the centroid-gap decay it induces, the path-weight factor and
//! its binomial expansion, per-class gradient shares on SBM graphs, and the
//! root-to-leaf decay of powers of `Â` on complete b-ary trees.

use rand::Rng;

use crate::graph::{build_graph, normalize_sym};
use crate::sbm::{generate_sbm, SbmConfig, MINORITY};
use crate::{rng_from_seed, Error, Result};

/// Largest tree accepted by [`jacobian_decay_check`].
pub const MAX_TREE_NODES: usize = 100_000;

/// 2×2 propagation matrix, rows and columns ordered (minority, majority).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropMatrix2(pub [[f64; 2]; 2]);

impl PropMatrix2 {
    pub fn identity() -> Self {
        PropMatrix2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn apply(&self, z: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * z[0] + m[0][1] * z[1],
            m[1][0] * z[0] + m[1][1] * z[1],
        ]
    }

    /// Both real eigenvalues, larger magnitude first.
    pub fn eigenvalues(&self) -> Result<(f64, f64)> {
        let tr = self.trace();
        let disc = tr * tr - 4.0 * self.det();
        if disc < -1e-14 {
            return Err(Error::ComplexEigenvalues(disc));
        }
        let s = disc.max(0.0).sqrt();
        let (a, b) = ((tr + s) / 2.0, (tr - s) / 2.0);
        Ok(if a.abs() >= b.abs() { (a, b) } else { (b, a) })
    }

    /// Eigenvector of the dominant eigenvalue, max-norm 1. Scalar matrices
    /// (every vector is an eigenvector) return `(1, 1)`.
    pub fn dominant_eigenvector(&self) -> Result<[f64; 2]> {
        let (l1, _) = self.eigenvalues()?;
        let m = &self.0;
        // Rows of (M - λ₁I); either nonzero row gives the null vector.
        let r0 = [m[0][0] - l1, m[0][1]];
        let r1 = [m[1][0], m[1][1] - l1];
        let tol = 1e-12;
        let v = if r0[0].abs().max(r0[1].abs()) > tol {
            [r0[1], -r0[0]]
        } else if r1[0].abs().max(r1[1].abs()) > tol {
            [r1[1], -r1[0]]
        } else {
            [1.0, 1.0]
        };
        let scale = v[0].abs().max(v[1].abs());
        let sign = if v[0] + v[1] < 0.0 { -1.0 } else { 1.0 };
        Ok([sign * v[0] / scale, sign * v[1] / scale])
    }
}

/// Expected class-centroid propagation matrix for a two-block SBM with
/// symmetric normalisation:
///
/// ```text
/// M = [ p/(p+qβ)   qβ/(q+pβ) ]
///     [ q/(p+qβ)   pβ/(q+pβ) ]
/// ```
pub fn propagation_matrix(p: f64, q: f64, beta: f64) -> Result<PropMatrix2> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
    }
    if !(q >= 0.0 && q <= p) {
        return Err(Error::InvalidParameter(format!("need 0 <= q <= p, got q={q}")));
    }
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be >= 1, got {beta}")));
    }
    let mi = p + q * beta;
    let ma = q + p * beta;
    Ok(PropMatrix2([[p / mi, q * beta / ma], [q / mi, p * beta / ma]]))
}

/// Eigenvalue of smaller magnitude, from the trace/determinant closed form.
pub fn second_eigenvalue(m: &PropMatrix2) -> Result<f64> {
    m.eigenvalues().map(|(_, l2)| l2)
}

/// Centroid gap per layer under `z⁽ˡ⁾ = σ·M·z⁽ˡ⁻¹⁾`, for `ℓ = 0..=l_max`.
///
/// `z0` holds the initial (minority, majority) centroids. The gap is taken
/// orthogonally to the dominant eigenvector `v = (v_mi, v_ma)` of `M`:
/// `|v_ma·μ_mi − v_mi·μ_ma|`. When `v ∝ (1, 1)` this is the plain
/// `|μ_mi − μ_ma|`; in general it removes the component that the dominant
/// mode carries forward at rate `σ·λ₁`, leaving exactly the subdominant mode,
/// which contracts by `σ·λ₂` per layer.
pub fn centroid_decay_curve(
    m: &PropMatrix2,
    sigma_max: f64,
    z0: [f64; 2],
    l_max: usize,
) -> Result<Vec<f64>> {
    if l_max < 2 {
        return Err(Error::InvalidParameter(format!("l_max must be >= 2, got {l_max}")));
    }
    let v = m.dominant_eigenvector()?;
    let gap = |z: [f64; 2]| (v[1] * z[0] - v[0] * z[1]).abs();
    let mut z = z0;
    let mut curve = Vec::with_capacity(l_max + 1);
    curve.push(gap(z));
    for _ in 0..l_max {
        let mz = m.apply(z);
        z = [sigma_max * mz[0], sigma_max * mz[1]];
        curve.push(gap(z));
    }
    Ok(curve)
}

/// Geometric rate `exp(slope)` of a least-squares line through `ln values[ℓ]`
/// for `ℓ ∈ range`. `None` if any value in the window is not positive.
pub fn fit_geometric_rate(values: &[f64], range: std::ops::RangeInclusive<usize>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = range
        .filter_map(|l| values.get(l).map(|&v| (l as f64, v)))
        .collect();
    if pts.len() < 2 || pts.iter().any(|&(_, v)| !(v > 0.0)) {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|&(x, y)| (x - mx) * (y.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Dimensionless path-weight factor `((β + τ) / (τ(β + 1)))^L`.
pub fn path_weight_factor(beta: f64, tau: f64, l: u32) -> f64 {
    ((beta + tau) / (tau * (beta + 1.0))).powi(l as i32)
}

/// The same factor as an explicit sum over the number `k` of majority steps:
/// `Σ_k C(L,k) (β/(τ(β+1)))^k (1/(β+1))^{L−k}`.
pub fn path_weight_binomial_sum(beta: f64, tau: f64, l: u32) -> f64 {
    let maj = beta / (tau * (beta + 1.0));
    let mi = 1.0 / (beta + 1.0);
    let mut binom = 1.0;
    let mut total = 0.0;
    for k in 0..=l {
        if k > 0 {
            binom = binom * f64::from(l - k + 1) / f64::from(k);
        }
        total += binom * maj.powi(k as i32) * mi.powi((l - k) as i32);
    }
    total
}

/// Expected ratio of minority to majority gradient magnitude, `1/β`.
pub fn gradient_ratio(beta: f64) -> f64 {
    1.0 / beta
}

/// Settings for [`gradient_share_monte_carlo`].
#[derive(Clone, Copy, Debug)]
pub struct GradientShareConfig {
    pub n2: usize,
    pub p: f64,
    pub q: f64,
    /// Path length `L`.
    pub path_len: usize,
    pub paths_per_graph: usize,
    pub trials: usize,
}

impl Default for GradientShareConfig {
    fn default() -> Self {
        Self {
            n2: 20,
            p: 0.3,
            q: 0.03,
            path_len: 5,
            paths_per_graph: 400,
            trials: 50,
        }
    }
}

/// Monte Carlo estimate of the minority/majority ratio of class-aggregated
/// path-weight contributions on SBM graphs with `n1 = β·n2`.
///
/// Each trial draws a fresh SBM graph and a batch of length-`L` paths. Paths
/// start at a uniform node and move by a Metropolis–Hastings walk (propose a
/// uniform neighbour `v` of `u`, accept with `min(1, d_u/d_v)`), whose
/// transition weights leave the uniform distribution invariant, so no node's
/// weight depends on its degree. Every visited node adds one unit of path
/// weight to its class; the per-trial ratio of class totals is averaged over
/// trials.
pub fn gradient_share_monte_carlo(beta: usize, cfg: &GradientShareConfig, seed: u64) -> Result<f64> {
    if beta == 0 || cfg.trials == 0 || cfg.paths_per_graph == 0 {
        return Err(Error::InvalidParameter(
            "beta, trials and paths_per_graph must be positive".into(),
        ));
    }
    let sbm = SbmConfig::new(beta * cfg.n2, cfg.n2, cfg.p, cfg.q)?;
    let n = sbm.n();
    let mut ratios = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let trial_seed = seed.wrapping_add(t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let (g, labels) = generate_sbm(&sbm, trial_seed)?;
        let mut rng = rng_from_seed(trial_seed ^ 0xA5A5);
        let (mut minority, mut majority) = (0.0f64, 0.0f64);
        for _ in 0..cfg.paths_per_graph {
            let mut u = rng.random_range(0..n);
            for step in 0..=cfg.path_len {
                if step > 0 && g.degree(u) > 0 {
                    let nb = g.neighbors(u);
                    let v = nb[rng.random_range(0..nb.len())];
                    let accept = g.degree(u) as f64 / g.degree(v) as f64;
                    if rng.random::<f64>() < accept {
                        u = v;
                    }
                }
                if labels[u] == MINORITY {
                    minority += 1.0;
                } else {
                    majority += 1.0;
                }
            }
        }
        ratios.push(minority / majority);
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Root-to-leaf entries `(Â^{r+1})_{root,leaf}` for `r = 1..=r_max`.
///
/// For each `r` a complete `b`-ary tree of depth `r + 1` is built, so the
/// chosen leaf sits at geodesic distance `r + 1` from the root. The entry is
/// obtained by `r + 1` sparse applications of `Â` to the root indicator.
pub fn jacobian_decay_check(b: usize, r_max: usize) -> Result<Vec<f64>> {
    if b < 2 || r_max < 1 {
        return Err(Error::InvalidParameter(format!(
            "need b >= 2 and r_max >= 1, got b={b} r_max={r_max}"
        )));
    }
    let mut out = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let (edges, n, leaf) = complete_tree(b, r + 1)?;
        let a = normalize_sym(&build_graph(&edges, n)?);
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        for _ in 0..=r {
            x = a.apply_vec(&x)?;
        }
        out.push(x[leaf]);
    }
    Ok(out)
}

/// Complete `b`-ary tree of the given depth in BFS order (root 0). Returns
/// the edges, node count, and the first node of the deepest level.
#[allow(clippy::type_complexity)]
pub fn complete_tree(b: usize, depth: usize) -> Result<(Vec<(usize, usize)>, usize, usize)> {
    let mut n = 1usize;
    let mut level = 1usize;
    for _ in 0..depth {
        level = level.saturating_mul(b);
        n = n.saturating_add(level);
        if n > MAX_TREE_NODES {
            return Err(Error::InvalidParameter(format!(
                "{b}-ary tree of depth {depth} exceeds {MAX_TREE_NODES} nodes"
            )));
        }
    }
    let edges = (1..n).map(|child| ((child - 1) / b, child)).collect();
    Ok((edges, n, n - level))
}

/// One row of the theory verification table.
#[derive(Clone, Debug)]
pub struct TheoryCheck {
    pub quantity: String,
    pub closed_form: f64,
    pub empirical: f64,
    pub rel_error: f64,
    pub tolerance: f64,
}

impl TheoryCheck {
    fn new(quantity: impl Into<String>, closed_form: f64, empirical: f64, tolerance: f64) -> Self {
        let rel_error = if closed_form == 0.0 {
            empirical.abs()
        } else {
            ((empirical - closed_form) / closed_form).abs()
        };
        Self {
            quantity: quantity.into(),
            closed_form,
            empirical,
            rel_error,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.rel_error <= self.tolerance
    }
}

/// Inputs for [`verify_theory`].
#[derive(Clone, Debug)]
pub struct TheoryConfig {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub sigma_max: f64,
    pub l_max: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            q: 0.1,
            beta: 10.0,
            sigma_max: 1.0,
            l_max: 12,
            seed: 0,
        }
    }
}

/// Runs every closed-form vs. empirical comparison and returns the table.
pub fn verify_theory(cfg: &TheoryConfig) -> Result<Vec<TheoryCheck>> {
    let mut rows = Vec::new();
    let m = propagation_matrix(cfg.p, cfg.q, cfg.beta)?;
    let (l1, l2) = m.eigenvalues()?;

    // For this family λ₁ = 1 exactly, so λ₂ = tr(M) − 1 gives a second route.
    rows.push(TheoryCheck::new("lambda2", m.trace() - 1.0, l2, 1e-10));
    rows.push(TheoryCheck::new("lambda1", 1.0, l1, 1e-3));

    let curve = centroid_decay_curve(&m, cfg.sigma_max, [1.0, 0.0], cfg.l_max)?;
    let rate = fit_geometric_rate(&curve, 5..=cfg.l_max).unwrap_or(f64::NAN);
    rows.push(TheoryCheck::new("centroid_decay_rate", cfg.sigma_max * l2, rate, 0.02));

    let tau = {
        let (b, p, q) = (cfg.beta, cfg.p, cfg.q);
        (q + p * b) / (p + q * b)
    };
    for l in [1u32, 5, 10, 20] {
        rows.push(TheoryCheck::new(
            format!("path_weight_L{l}"),
            path_weight_factor(cfg.beta, tau, l),
            path_weight_binomial_sum(cfg.beta, tau, l),
            1e-12,
        ));
    }

    for beta in [2usize, 5, 10] {
        let mc = gradient_share_monte_carlo(beta, &GradientShareConfig::default(), cfg.seed)?;
        rows.push(TheoryCheck::new(
            format!("gradient_ratio_beta{beta}"),
            gradient_ratio(beta as f64),
            mc,
            0.10,
        ));
    }

    for b in [2usize, 3] {
        let entries = jacobian_decay_check(b, 5)?;
        let base = fit_geometric_rate(&entries, 0..=entries.len() - 1).unwrap_or(f64::NAN);
        // Interior edges of the tree carry weight 1/(b+2) each.
        rows.push(TheoryCheck::new(
            format!("tree_decay_base_b{b}"),
            1.0 / (b as f64 + 2.0),
            base,
            1e-9,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_propagation_matrix() {
        let m = propagation_matrix(0.5, 0.1, 10.0).unwrap();
        let expect = [[0.333, 0.196], [0.067, 0.980]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.0[i][j] - expect[i][j]).abs() < 5e-4, "{i}{j}: {}", m.0[i][j]);
            }
        }
    }

    #[test]
    fn degenerate_propagation_matrices() {
        assert_eq!(propagation_matrix(0.3, 0.0, 7.0).unwrap(), PropMatrix2::identity());
        let m = propagation_matrix(0.2, 0.2, 1.0).unwrap();
        for row in m.0 {
            for x in row {
                assert!((x - 0.5).abs() < 1e-15);
            }
        }
        assert!(propagation_matrix(0.0, 0.0, 2.0).is_err());
        assert!(propagation_matrix(0.5, 0.1, 0.5).is_err());
    }

    #[test]
    fn second_eigenvalue_examples() {
        let m = propagation_matrix(0.5, 0.1, 10.0).unwrap();
        assert!((second_eigenvalue(&m).unwrap() - 0.313).abs() < 1e-3);
        assert_eq!(second_eigenvalue(&PropMatrix2::identity()).unwrap(), 1.0);
        let d = PropMatrix2([[1.0, 0.0], [0.0, 0.5]]);
        assert_eq!(second_eigenvalue(&d).unwrap(), 0.5);
        let rot = PropMatrix2([[0.0, -1.0], [1.0, 0.0]]);
        assert!(matches!(second_eigenvalue(&rot), Err(Error::ComplexEigenvalues(_))));
    }

    #[test]
    fn dominant_eigenvalue_is_one_for_example() {
        let m = propagation_matrix(0.5, 0.1, 10.0).unwrap();
        let (l1, _) = m.eigenvalues().unwrap();
        assert!((l1 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn decay_curve_edge_cases() {
        let m = propagation_matrix(0.5, 0.1, 10.0).unwrap();
        let zero = centroid_decay_curve(&m, 1.0, [0.0, 0.0], 6).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        let id = centroid_decay_curve(&PropMatrix2::identity(), 1.0, [2.0, -1.0], 6).unwrap();
        assert!(id.iter().all(|&x| (x - 3.0).abs() < 1e-15));

        assert!(centroid_decay_curve(&m, 1.0, [1.0, 0.0], 1).is_err());
    }

    #[test]
    fn decay_curve_rate_matches_lambda2() {
        let m = propagation_matrix(0.5, 0.1, 10.0).unwrap();
        let curve = centroid_decay_curve(&m, 1.0, [1.0, 0.0], 12).unwrap();
        let rate = fit_geometric_rate(&curve, 5..=12).unwrap();
        assert!((rate - 0.313).abs() / 0.313 < 0.02, "rate {rate}");
    }

    #[test]
    fn path_weight_small_cases() {
        for l in 0..10 {
            assert!((path_weight_factor(4.0, 1.0, l) - 1.0).abs() < 1e-14);
        }
        assert_eq!(path_weight_factor(10.0, 3.4, 0), 1.0);
        let closed = path_weight_factor(10.0, 3.4, 5);
        let sum = path_weight_binomial_sum(10.0, 3.4, 5);
        assert!(((closed - sum) / closed).abs() < 1e-12);
    }

    #[test]
    fn gradient_ratio_closed_form() {
        assert_eq!(gradient_ratio(1.0), 1.0);
        assert!((gradient_ratio(10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tree_layout() {
        let (edges, n, leaf) = complete_tree(2, 2).unwrap();
        assert_eq!(n, 7);
        assert_eq!(leaf, 3);
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);
        assert!(complete_tree(10, 6).is_err());
        assert!(jacobian_decay_check(1, 3).is_err());
    }

    #[test]
    fn fit_rate_of_exact_geometric() {
        let v: Vec<f64> = (0..10).map(|l| 3.0 * 0.5f64.powi(l)).collect();
        assert!((fit_geometric_rate(&v, 2..=9).unwrap() - 0.5).abs() < 1e-12);
        assert!(fit_geometric_rate(&[1.0, 0.0, 1.0], 0..=2).is_none());
    }
}
