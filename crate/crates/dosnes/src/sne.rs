//! Stochastic neighbor embedding with an optional sphere constraint.
//!
//! The engine minimizes the Kullback-Leibler divergence KL(P || Q) between a
//! fixed target distribution P over point pairs and the embedding-induced
//! distribution Q. Output similarities come from one of two kernels applied
//! to squared Euclidean distances:
//!
//! ```text
//! gaussian: q_ij = exp(-|y_i - y_j|^2)
//! cauchy:   q_ij = 1 / (1 + |y_i - y_j|^2)
//! ```
//!
//! with `q_ii = 0`, and `Q_ij = q_ij / sum_ab q_ab`. Gradient descent with
//! momentum runs either in flat 2-D/3-D space or constrained to a centered
//! sphere: after every update the iterate is projected by centering and
//! rescaling every point to the mean radius, so points can move along the
//! sphere but not off it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::matrix::{SparseSymMatrix, StochasticAffinity};

#[derive(Debug, Error)]
pub enum SneError {
    #[error("embedding dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("coordinate buffer has length {len}, expected {n} x {d}")]
    BadShape { n: usize, d: usize, len: usize },
    #[error("non-finite coordinate for point {0}")]
    NonFiniteCoordinate(usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("target distribution has zero total similarity")]
    EmptyTarget,
    #[error("target entry ({i}, {j}) is negative")]
    NegativeTarget { i: usize, j: usize },
    #[error(
        "output similarity underflowed to zero for pair ({i}, {j}) with positive target; \
         the iterate has degenerated"
    )]
    VanishingQ { i: usize, j: usize },
    #[error("objective became non-finite at iteration {iter}; lower the learning rate")]
    Diverged { iter: usize },
    #[error("sphere mode requires dimension 3, got {0}")]
    SphereNeedsDim3(usize),
    #[error("invalid optimizer configuration: {0}")]
    BadConfig(String),
}

/// Output similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Cauchy,
}

impl KernelKind {
    /// Unnormalized similarity from a squared distance.
    pub fn similarity(self, sq_dist: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-sq_dist).exp(),
            KernelKind::Cauchy => 1.0 / (1.0 + sq_dist),
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "cauchy" => Ok(Self::Cauchy),
            other => Err(format!("unknown kernel {other:?}; expected gaussian or cauchy")),
        }
    }
}

/// A set of n points in 2 or 3 dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl Embedding {
    pub fn from_coords(n: usize, d: usize, coords: Vec<f64>) -> Result<Self, SneError> {
        if d != 2 && d != 3 {
            return Err(SneError::BadDimension(d));
        }
        if coords.len() != n * d {
            return Err(SneError::BadShape { n, d, len: coords.len() });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(SneError::NonFiniteCoordinate(pos / d));
        }
        Ok(Self { n, d, coords })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Euclidean norm of point i.
    pub fn radius(&self, i: usize) -> f64 {
        self.point(i).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.d];
        for i in 0..self.n {
            for (acc, v) in c.iter_mut().zip(self.point(i)) {
                *acc += v;
            }
        }
        for acc in c.iter_mut() {
            *acc /= self.n as f64;
        }
        c
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Target pair distribution P: dense symmetric n x n, zero diagonal,
/// entries summing to 1.
#[derive(Debug, Clone)]
pub struct TargetDistribution {
    n: usize,
    p: Vec<f64>,
}

impl TargetDistribution {
    /// Target from a certified doubly stochastic affinity. The stored
    /// diagonal, if any, is dropped and the off-diagonal mass rescaled to
    /// sum to 1, so the distribution stays exactly normalized.
    pub fn from_affinity(aff: &StochasticAffinity) -> Result<Self, SneError> {
        Self::from_sparse(aff.matrix())
    }

    /// Matrix-wise normalization of a raw symmetric similarity matrix:
    /// `P_ij = s_ij / sum_ab s_ab`.
    pub fn from_matrix(m: &SparseSymMatrix) -> Result<Self, SneError> {
        Self::from_sparse(m)
    }

    fn from_sparse(m: &SparseSymMatrix) -> Result<Self, SneError> {
        let n = m.node_count();
        let total = m.total();
        if total <= 0.0 {
            return Err(SneError::EmptyTarget);
        }
        let mut p = vec![0.0; n * n];
        for (i, j, w) in m.iter() {
            p[i * n + j] = w / total;
        }
        Ok(Self { n, p })
    }

    /// Target from a dense symmetric nonnegative buffer with zero diagonal
    /// (row-major, length n*n). Entries are rescaled to sum to 1.
    pub fn from_dense(n: usize, values: &[f64]) -> Result<Self, SneError> {
        if values.len() != n * n {
            return Err(SneError::BadShape { n, d: n, len: values.len() });
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if v < 0.0 || !v.is_finite() {
                    return Err(SneError::NegativeTarget { i, j });
                }
                if i == j && v != 0.0 {
                    return Err(SneError::NegativeTarget { i, j });
                }
                if (v - values[j * n + i]).abs() > 0.0 {
                    return Err(SneError::NegativeTarget { i, j });
                }
            }
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(SneError::EmptyTarget);
        }
        let p = values.iter().map(|v| v / total).collect();
        Ok(Self { n, p })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

/// Pairwise similarities of an embedding: the raw kernel matrix `q`, its
/// normalization `q_norm = q / sum`, and the normalizer itself.
#[derive(Debug, Clone)]
pub struct QMatrices {
    n: usize,
    q: Vec<f64>,
    q_norm: Vec<f64>,
    sum: f64,
}

impl QMatrices {
    pub fn raw(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        self.q_norm[i * self.n + j]
    }

    pub fn normalizer(&self) -> f64 {
        self.sum
    }
}

/// Kernel matrix of an embedding with the self-pair convention `q_ii = 0`.
pub fn compute_q(y: &Embedding, kernel: KernelKind) -> QMatrices {
    let n = y.len();
    assert!(n >= 2, "similarity matrix needs at least 2 points");
    let mut q = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = kernel.similarity(sq_dist(y.point(i), y.point(j)));
            q[i * n + j] = w;
            q[j * n + i] = w;
            sum += 2.0 * w;
        }
    }
    let q_norm = if sum > 0.0 {
        q.iter().map(|w| w / sum).collect()
    } else {
        vec![0.0; n * n]
    };
    QMatrices { n, q, q_norm, sum }
}

/// KL(P || Q) in nats, summed over ordered pairs with positive target mass.
pub fn kl_objective(
    p: &TargetDistribution,
    y: &Embedding,
    kernel: KernelKind,
) -> Result<f64, SneError> {
    kl_given_q(p, &compute_q(y, kernel))
}

fn kl_given_q(p: &TargetDistribution, qm: &QMatrices) -> Result<f64, SneError> {
    let n = p.len();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if pij <= 0.0 {
                continue;
            }
            let qij = qm.normalized(i, j);
            if qij <= 0.0 {
                return Err(SneError::VanishingQ { i, j });
            }
            kl += pij * (pij / qij).ln();
        }
    }
    Ok(kl)
}

/// Gradient of KL(P || Q) with respect to the point coordinates, length n*d.
///
/// For both kernels the gradient of point i is a weighted sum of difference
/// vectors:
///
/// ```text
/// gaussian: g_i = 4 sum_j (P_ij - Q_ij) (y_i - y_j)
/// cauchy:   g_i = 4 sum_j (P_ij - Q_ij) q_ij (y_i - y_j)
/// ```
///
/// where `q_ij` is the raw Cauchy similarity. Coincident points contribute
/// zero, and the rows of the gradient sum to zero (the objective is
/// translation invariant).
pub fn gradient(p: &TargetDistribution, y: &Embedding, kernel: KernelKind) -> Vec<f64> {
    gradient_given_q(p, 1.0, y, &compute_q(y, kernel), kernel)
}

fn gradient_given_q(
    p: &TargetDistribution,
    p_gain: f64,
    y: &Embedding,
    qm: &QMatrices,
    kernel: KernelKind,
) -> Vec<f64> {
    let n = y.len();
    let d = y.dim();
    let mut g = vec![0.0; n * d];
    for i in 0..n {
        let yi = y.point(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut coef = 4.0 * (p_gain * p.get(i, j) - qm.normalized(i, j));
            if kernel == KernelKind::Cauchy {
                coef *= qm.raw(i, j);
            }
            let yj = y.point(j);
            for c in 0..d {
                g[i * d + c] += coef * (yi[c] - yj[c]);
            }
        }
    }
    g
}

const DEGENERATE_NORM: f64 = 1e-12;
const PERTURBATION_SCALE: f64 = 1e-8;
const PROJECTION_SEED: u64 = 0x646f_736e_6573;

/// Projection onto the centered sphere: subtract the centroid, then rescale
/// every point to the mean radius
///
/// ```text
/// r = (1/n) sum_j |y_j - c|,    y_i <- r (y_i - c) / |y_i - c|
/// ```
///
/// A centered point with norm below 1e-12 has no usable direction and is
/// first nudged by a random vector of magnitude 1e-8 so the rescale is
/// defined. Already centered, equal-norm configurations are fixed points.
/// Projecting twice equals projecting once up to that degenerate nudge.
pub fn project_to_sphere(y: &Embedding) -> Embedding {
    let mut out = y.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    project_in_place(&mut out, &mut rng);
    out
}

pub(crate) fn project_in_place(y: &mut Embedding, rng: &mut impl Rng) {
    assert_eq!(y.dim(), 3, "sphere projection is defined for 3-dimensional embeddings");
    let n = y.len();
    assert!(n >= 2, "sphere projection needs at least 2 points");

    let centroid = y.centroid();
    for i in 0..n {
        let pt = y.point_mut(i);
        for (v, c) in pt.iter_mut().zip(&centroid) {
            *v -= c;
        }
    }
    for i in 0..n {
        if y.radius(i) < DEGENERATE_NORM {
            let dir = random_unit(y.dim(), rng);
            let pt = y.point_mut(i);
            for (v, u) in pt.iter_mut().zip(&dir) {
                *v += PERTURBATION_SCALE * u;
            }
        }
    }
    let mean_radius = (0..n).map(|i| y.radius(i)).sum::<f64>() / n as f64;
    for i in 0..n {
        let r = y.radius(i);
        let scale = mean_radius / r;
        for v in y.point_mut(i) {
            *v *= scale;
        }
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Random initialization: iid Gaussian coordinates with standard deviation
/// 1e-4, optionally projected onto the sphere. Deterministic in the seed.
pub fn initialize(n: usize, d: usize, seed: u64, sphere_mode: bool) -> Result<Embedding, SneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with_rng(n, d, sphere_mode, &mut rng)
}

fn init_with_rng(
    n: usize,
    d: usize,
    sphere_mode: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Embedding, SneError> {
    if d != 2 && d != 3 {
        return Err(SneError::BadDimension(d));
    }
    if sphere_mode && d != 3 {
        return Err(SneError::SphereNeedsDim3(d));
    }
    if n < 2 {
        return Err(SneError::TooFewPoints(n));
    }
    let normal = Normal::new(0.0, 1e-4).expect("init scale");
    let coords: Vec<f64> = (0..n * d).map(|_| normal.sample(rng)).collect();
    let mut y = Embedding::from_coords(n, d, coords)?;
    if sphere_mode {
        project_in_place(&mut y, rng);
    }
    Ok(y)
}

/// Gradient descent schedule. Defaults follow common t-SNE practice:
/// learning rate 200, momentum 0.5 switching to 0.8 at iteration 250, and
/// 4x early exaggeration of the target for the first 100 iterations.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub dim: usize,
    pub sphere_mode: bool,
    /// Early-stop threshold on the relative objective change over a
    /// 50-iteration window; 0 disables early stopping.
    pub rel_obj_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            exaggeration: 4.0,
            exaggeration_iters: 100,
            max_iters: 1000,
            seed: 0,
            dim: 3,
            sphere_mode: true,
            rel_obj_tol: 1e-7,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), SneError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(SneError::BadDimension(self.dim));
        }
        if self.sphere_mode && self.dim != 3 {
            return Err(SneError::SphereNeedsDim3(self.dim));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SneError::BadConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, m) in [
            ("initial momentum", self.momentum_initial),
            ("final momentum", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return Err(SneError::BadConfig(format!("{name} must lie in [0, 1), got {m}")));
            }
        }
        if !(self.exaggeration >= 1.0 && self.exaggeration.is_finite()) {
            return Err(SneError::BadConfig(format!(
                "exaggeration must be at least 1, got {}",
                self.exaggeration
            )));
        }
        if !(self.rel_obj_tol >= 0.0) {
            return Err(SneError::BadConfig(format!(
                "relative objective tolerance must be nonnegative, got {}",
                self.rel_obj_tol
            )));
        }
        Ok(())
    }
}

const EARLY_STOP_WINDOW: usize = 50;

/// Optimization record. `kl[t]` is the true (un-exaggerated) objective of
/// the iterate entering update t, so `kl.len() == iterations`; `final_kl`
/// is the objective of the returned embedding. In sphere mode `radius_cv`
/// holds the per-iteration coefficient of variation of the point radii
/// measured right after projection.
#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub kl: Vec<f64>,
    pub final_kl: f64,
    pub iterations: usize,
    pub radius_cv: Vec<f64>,
    pub final_radius: Option<f64>,
    pub final_centroid_norm: f64,
}

/// Full optimization run: initialize from `cfg.seed`, then repeat
///
/// ```text
/// v <- mu v - eta grad J(Y)
/// Y <- Y + v            (projected onto the sphere in sphere mode)
/// ```
///
/// until `max_iters` updates, early stop on a flat objective, or failure.
/// A non-finite objective aborts with the iteration index; the caller
/// should lower the learning rate.
pub fn run(
    p: &TargetDistribution,
    kernel: KernelKind,
    cfg: &OptimizerConfig,
) -> Result<(Embedding, RunTrace), SneError> {
    cfg.validate()?;
    let n = p.len();
    if n < 2 {
        return Err(SneError::TooFewPoints(n));
    }
    if n > 20_000 {
        log::warn!("embedding {n} points: dense pairwise similarities are O(n^2) per iteration");
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y = init_with_rng(n, d, cfg.sphere_mode, &mut rng)?;
    let mut velocity = vec![0.0; n * d];

    let mut kl_trace: Vec<f64> = Vec::new();
    let mut radius_cv: Vec<f64> = Vec::new();
    let mut stopped_kl = None;

    for iter in 0..cfg.max_iters {
        if y.coords().iter().any(|c| !c.is_finite()) {
            return Err(SneError::Diverged { iter });
        }
        let qm = compute_q(&y, kernel);
        let kl = kl_given_q(p, &qm)?;
        if !kl.is_finite() {
            return Err(SneError::Diverged { iter });
        }
        if kl_trace.len() >= EARLY_STOP_WINDOW {
            let prev = kl_trace[kl_trace.len() - EARLY_STOP_WINDOW];
            let rel = (prev - kl).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.rel_obj_tol {
                stopped_kl = Some(kl);
                break;
            }
        }
        kl_trace.push(kl);

        let p_gain = if iter < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let grad = gradient_given_q(p, p_gain, &y, &qm, kernel);
        let mu = if iter < cfg.momentum_switch_iter {
            cfg.momentum_initial
        } else {
            cfg.momentum_final
        };
        for (v, g) in velocity.iter_mut().zip(&grad) {
            *v = mu * *v - cfg.learning_rate * g;
        }
        for (c, v) in y.coords.iter_mut().zip(&velocity) {
            *c += v;
        }
        if cfg.sphere_mode {
            project_in_place(&mut y, &mut rng);
            radius_cv.push(radius_variation(&y));
        }
    }

    let final_kl = match stopped_kl {
        Some(kl) => kl,
        None => {
            if y.coords().iter().any(|c| !c.is_finite()) {
                return Err(SneError::Diverged { iter: kl_trace.len() });
            }
            let kl = kl_objective(p, &y, kernel)?;
            if !kl.is_finite() {
                return Err(SneError::Diverged { iter: kl_trace.len() });
            }
            kl
        }
    };

    let iterations = kl_trace.len();
    let centroid = y.centroid();
    let final_centroid_norm = centroid.iter().map(|c| c * c).sum::<f64>().sqrt();
    let final_radius = if cfg.sphere_mode {
        Some((0..n).map(|i| y.radius(i)).sum::<f64>() / n as f64)
    } else {
        None
    };
    let trace = RunTrace {
        kl: kl_trace,
        final_kl,
        iterations,
        radius_cv,
        final_radius,
        final_centroid_norm,
    };
    Ok((y, trace))
}

/// Coefficient of variation of the point radii (population standard
/// deviation over mean; 0 for an all-zero configuration).
fn radius_variation(y: &Embedding) -> f64 {
    let n = y.len();
    let radii: Vec<f64> = (0..n).map(|i| y.radius(i)).collect();
    let mean = radii.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    var.sqrt() / mean
}
