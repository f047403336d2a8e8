//! Numerical checks of the distance-sum bounds and the sphere geometry.
//!
//! For an embedding row i, write `t_j = |y_i - y_j|^2`. Under the Gaussian
//! kernel the row kernel sum `c = sum_j exp(-t_j)` (self term included, so
//! the max similarity is 1) pins the total squared distance of the row into
//! an interval:
//!
//! ```text
//! n ln(n/c)  <=  sum_j t_j  <=  n ln(n / (c - n b))
//! ```
//!
//! where `b` is the arithmetic-geometric mean gap bound
//! `b = a m + (1 - a) - m^a`, `m = exp(-max_j t_j)`,
//! `a = ln(ln(1/m) / (1 - m)) / ln(1/m)`. Under the Cauchy kernel, with
//! `c = sum_j 1/(1 + t_j)`:
//!
//! ```text
//! n^2/c - n  <=  sum_j t_j  <=  n^2/c - n + n (sqrt(b) - 1)^2
//! ```
//!
//! with `b = 1 + max_j t_j`, via the arithmetic-harmonic mean gap. Both
//! say the same thing: when every row kernel sum is equal (P = Q doubly
//! stochastic), every row's total squared distance is pinned to the same
//! narrow interval, which forces the points toward a sphere. The sphere
//! statement itself is the third check: centered points with equal
//! squared-distance row sums have equal norms, by the identity
//! `n |y_i|^2 + sum_j |y_j|^2 = sum_j |y_i - y_j|^2`.

use serde::{Serialize, Serializer};

use crate::sne::{sq_dist, Embedding, KernelKind};

fn nullable_if_infinite<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn opt_nullable_if_infinite<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_some(x),
        _ => s.serialize_none(),
    }
}

/// Bound evaluation for one embedding row. `upper` may be infinite
/// (serialized as null) when the Gaussian bound degenerates; `holds` is
/// checked with a 1e-9 slack on both sides.
///
/// `b_stated`/`upper_stated` evaluate the variant constant
/// `b = a + (1 - a) m - m^a` that appears in some statements of the
/// Gaussian bound; the primary fields use the form the derivation actually
/// produces.
#[derive(Debug, Clone, Serialize)]
pub struct RowBoundResult {
    pub row: usize,
    pub c: f64,
    pub sum_sq: f64,
    pub m: Option<f64>,
    pub a: Option<f64>,
    pub b: f64,
    pub lower: f64,
    #[serde(serialize_with = "nullable_if_infinite")]
    pub upper: f64,
    pub holds: bool,
    pub b_stated: Option<f64>,
    #[serde(serialize_with = "opt_nullable_if_infinite")]
    pub upper_stated: Option<f64>,
}

const BOUND_SLACK: f64 = 1e-9;

fn row_sq_dists(y: &Embedding, i: usize) -> Vec<f64> {
    (0..y.len()).map(|j| sq_dist(y.point(i), y.point(j))).collect()
}

/// Gaussian-kernel distance-sum bounds for row i.
pub fn prop1_bounds(y: &Embedding, i: usize) -> RowBoundResult {
    let n = y.len();
    assert!(n >= 2, "bounds need at least 2 points");
    let nf = n as f64;
    let t = row_sq_dists(y, i);
    let sum_sq: f64 = t.iter().sum();
    let t_max = t.iter().copied().fold(0.0, f64::max);
    let c: f64 = t.iter().map(|&v| (-v).exp()).sum();

    if t_max == 0.0 {
        // Every point coincides with y_i: c = n and both bounds collapse.
        return RowBoundResult {
            row: i,
            c,
            sum_sq,
            m: Some(1.0),
            a: None,
            b: 0.0,
            lower: 0.0,
            upper: 0.0,
            holds: sum_sq.abs() <= BOUND_SLACK,
            b_stated: Some(0.0),
            upper_stated: Some(0.0),
        };
    }

    let m = (-t_max).exp();
    let a = gaussian_weight_a(t_max);
    let m_pow_a = (-a * t_max).exp();
    // Arithmetic-geometric gap; nonnegative by weighted AM-GM, clamp
    // against roundoff so upper >= lower stays true.
    let b = (a * m + (1.0 - a) - m_pow_a).max(0.0);
    let b_stated = a + (1.0 - a) * m - m_pow_a;

    let lower = nf * (nf / c).ln();
    let upper = gaussian_upper(nf, c, b);
    let upper_stated = gaussian_upper(nf, c, b_stated);
    let holds = sum_sq >= lower - BOUND_SLACK
        && (!upper.is_finite() || sum_sq <= upper + BOUND_SLACK);

    RowBoundResult {
        row: i,
        c,
        sum_sq,
        m: Some(m),
        a: Some(a),
        b,
        lower,
        upper,
        holds,
        b_stated: Some(b_stated),
        upper_stated: Some(upper_stated),
    }
}

/// a(t) = ln(t / (1 - e^{-t})) / t, the exponent weight in the Gaussian
/// upper bound. The direct form loses every significant digit once
/// t/(1-e^{-t}) rounds to 1, so small t switches to the series
/// a = 1/2 - t/24 + t^3/2880 + O(t^4); a -> 1/2 as t -> 0.
fn gaussian_weight_a(t: f64) -> f64 {
    if t < 1e-4 {
        0.5 - t / 24.0 + t * t * t / 2880.0
    } else {
        // 1 - e^{-t} via -expm1 keeps precision for moderate t.
        let one_minus_m = -f64::exp_m1(-t);
        (t / one_minus_m).ln() / t
    }
}

fn gaussian_upper(nf: f64, c: f64, b: f64) -> f64 {
    let denom = c - nf * b;
    if denom > 0.0 {
        nf * (nf / denom).ln()
    } else {
        f64::INFINITY
    }
}

/// Cauchy-kernel distance-sum bounds for row i.
pub fn prop2_bounds(y: &Embedding, i: usize) -> RowBoundResult {
    let n = y.len();
    assert!(n >= 2, "bounds need at least 2 points");
    let nf = n as f64;
    let t = row_sq_dists(y, i);
    let sum_sq: f64 = t.iter().sum();
    let t_max = t.iter().copied().fold(0.0, f64::max);
    let c: f64 = t.iter().map(|&v| 1.0 / (1.0 + v)).sum();

    let b = 1.0 + t_max;
    let lower = nf * nf / c - nf;
    let upper = lower + nf * (b.sqrt() - 1.0) * (b.sqrt() - 1.0);
    let holds = sum_sq >= lower - BOUND_SLACK && sum_sq <= upper + BOUND_SLACK;

    RowBoundResult {
        row: i,
        c,
        sum_sq,
        m: Some(1.0 / b),
        a: None,
        b,
        lower,
        upper,
        holds,
        b_stated: None,
        upper_stated: None,
    }
}

/// Equal row sums imply equal norms, quantified.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Prop3Report {
    /// max_i |sum_j |y_i - y_j|^2 - mean| on the centered points.
    pub row_sum_spread: f64,
    /// max_i ||y_i|^2 - mean| on the centered points.
    pub norm_spread: f64,
    /// Centroid norm of the input (the premise of the implication).
    pub centroid_norm: f64,
    pub verdict: bool,
}

/// Checks the implication behind the sphere claim: once Y is centered,
/// `sum_j |y_i - y_j|^2 = n |y_i|^2 + sum_j |y_j|^2`, so equal row sums
/// force equal norms. `verdict` asserts that whenever the row-sum spread
/// and the input centroid norm are within `tol`, the norm spread is within
/// `tol (1 + 1/n) k` with the linearized constant k = 2.
pub fn prop3_check(y: &Embedding, tol: f64) -> Prop3Report {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = y.len();
    assert!(n >= 2, "check needs at least 2 points");
    let nf = n as f64;

    let centroid = y.centroid();
    let centroid_norm = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
    let centered_coords: Vec<f64> = y
        .coords()
        .iter()
        .enumerate()
        .map(|(idx, v)| v - centroid[idx % y.dim()])
        .collect();
    let centered = Embedding::from_coords(n, y.dim(), centered_coords)
        .expect("centering preserves shape and finiteness");

    let sq_norms: Vec<f64> =
        (0..n).map(|i| centered.point(i).iter().map(|v| v * v).sum()).collect();
    let row_sums: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| sq_dist(centered.point(i), centered.point(j))).sum())
        .collect();

    let row_sum_spread = spread_about_mean(&row_sums);
    let norm_spread = spread_about_mean(&sq_norms);

    let premise = row_sum_spread <= tol && centroid_norm <= tol;
    let conclusion = norm_spread <= tol * (1.0 + 1.0 / nf) * 2.0;
    let verdict = !premise || conclusion;

    Prop3Report { row_sum_spread, norm_spread, centroid_norm, verdict }
}

fn spread_about_mean(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
}

/// How sphere-like an embedding is.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SphericityReport {
    /// Norm of the centroid before centering.
    pub centroid_norm: f64,
    /// Mean point radius after centering.
    pub mean_radius: f64,
    /// Population standard deviation of the centered radii over their mean;
    /// 0 when all points coincide.
    pub radius_cv: f64,
    /// Largest |r_i - r_j| over the centered radii.
    pub max_norm_discrepancy: f64,
}

pub fn sphericity(y: &Embedding) -> SphericityReport {
    let n = y.len();
    assert!(n >= 2, "sphericity needs at least 2 points");
    let centroid = y.centroid();
    let centroid_norm = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();

    let radii: Vec<f64> = (0..n)
        .map(|i| {
            y.point(i)
                .iter()
                .zip(&centroid)
                .map(|(v, c)| (v - c) * (v - c))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mean_radius = radii.iter().sum::<f64>() / n as f64;
    let radius_cv = if mean_radius > 0.0 {
        let var =
            radii.iter().map(|r| (r - mean_radius) * (r - mean_radius)).sum::<f64>() / n as f64;
        var.sqrt() / mean_radius
    } else {
        0.0
    };
    let max_r = radii.iter().copied().fold(f64::MIN, f64::max);
    let min_r = radii.iter().copied().fold(f64::MAX, f64::min);

    SphericityReport {
        centroid_norm,
        mean_radius,
        radius_cv,
        max_norm_discrepancy: max_r - min_r,
    }
}

/// Coefficient of variation of the row kernel sums `sum_{j != i} q_ij`.
/// Near zero means Q is close to doubly stochastic up to a constant factor.
pub fn q_row_uniformity(y: &Embedding, kernel: KernelKind) -> f64 {
    let n = y.len();
    assert!(n >= 2, "row uniformity needs at least 2 points");
    let sums: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| kernel.similarity(sq_dist(y.point(i), y.point(j))))
                .sum()
        })
        .collect();
    let mean = sums.iter().sum::<f64>() / n as f64;
    let var = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
    var.sqrt() / mean
}

/// Great-circle distance between two points taken to lie on a common
/// origin-centered sphere; the radius used is the mean of the two norms.
pub fn geodesic_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cosine = (dot / (na * nb)).clamp(-1.0, 1.0);
    0.5 * (na + nb) * cosine.acos()
}

/// Aggregate proposition report for an embedding, with per-row bound
/// evaluations for both kernels, the norm-implication check, and the
/// sphericity summary.
#[derive(Debug, Clone, Serialize)]
pub struct PropositionReport {
    pub prop1: Vec<RowBoundResult>,
    pub prop2: Vec<RowBoundResult>,
    pub prop1_rows_holding: usize,
    pub prop2_rows_holding: usize,
    pub prop3: Prop3Report,
    pub sphericity: SphericityReport,
}

pub fn proposition_report(y: &Embedding, prop3_tol: f64) -> PropositionReport {
    let n = y.len();
    let prop1: Vec<RowBoundResult> = (0..n).map(|i| prop1_bounds(y, i)).collect();
    let prop2: Vec<RowBoundResult> = (0..n).map(|i| prop2_bounds(y, i)).collect();
    let prop1_rows_holding = prop1.iter().filter(|r| r.holds).count();
    let prop2_rows_holding = prop2.iter().filter(|r| r.holds).count();
    PropositionReport {
        prop1,
        prop2,
        prop1_rows_holding,
        prop2_rows_holding,
        prop3: prop3_check(y, prop3_tol),
        sphericity: sphericity(y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn embedding(points: &[[f64; 3]]) -> Embedding {
        let coords: Vec<f64> = points.iter().flatten().copied().collect();
        Embedding::from_coords(points.len(), 3, coords).unwrap()
    }

    fn random_embedding(n: usize, scale: f64, seed: u64) -> Embedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> =
            (0..n * 3).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect();
        Embedding::from_coords(n, 3, coords).unwrap()
    }

    #[test]
    fn prop1_coincident_points_collapse_to_zero() {
        let y = embedding(&[[0.2, 0.2, 0.2]; 4]);
        let r = prop1_bounds(&y, 0);
        assert_eq!(r.c, 4.0);
        assert_eq!(r.lower, 0.0);
        assert_eq!(r.upper, 0.0);
        assert_eq!(r.sum_sq, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn prop1_equilateral_triangle_brackets_the_row_sum() {
        let s: f64 = 1.3;
        let h = s * 3.0_f64.sqrt() / 2.0;
        let coords = vec![0.0, 0.0, 0.0, s, 0.0, 0.0, s / 2.0, h, 0.0];
        let y = Embedding::from_coords(3, 3, coords).unwrap();
        for i in 0..3 {
            let r = prop1_bounds(&y, i);
            let expected_c = 1.0 + 2.0 * (-s * s).exp();
            assert_abs_diff_eq!(r.c, expected_c, epsilon = 1e-12);
            assert_abs_diff_eq!(r.sum_sq, 2.0 * s * s, epsilon = 1e-12);
            assert!(r.lower <= r.sum_sq + 1e-9, "L = {}, sum = {}", r.lower, r.sum_sq);
            assert!(r.sum_sq <= r.upper + 1e-9, "U = {}, sum = {}", r.upper, r.sum_sq);
            assert!(r.holds);
        }
    }

    #[test]
    fn prop1_holds_on_random_rows() {
        for seed in 0..5 {
            let y = random_embedding(50, 1.5, seed);
            for i in 0..50 {
                let r = prop1_bounds(&y, i);
                assert!(r.holds, "seed {seed} row {i}: {r:?}");
                if r.upper.is_finite() {
                    assert!(r.lower <= r.upper + 1e-12);
                }
                let (a, m) = (r.a.unwrap(), r.m.unwrap());
                assert!(a > 0.0 && a < 1.0, "a = {a}");
                assert!(m > 0.0 && m <= 1.0, "m = {m}");
                assert!(r.b >= 0.0);
            }
        }
    }

    #[test]
    fn prop1_tiny_separation_stays_stable() {
        let y = embedding(&[[0.0, 0.0, 0.0], [1e-9, 0.0, 0.0], [0.0, 1e-9, 0.0]]);
        for i in 0..3 {
            let r = prop1_bounds(&y, i);
            assert!(r.holds, "row {i}: {r:?}");
            assert!(r.lower.is_finite());
            // a -> 1/2 as the largest distance goes to zero.
            assert_abs_diff_eq!(r.a.unwrap(), 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn prop1_huge_separation_underflows_gracefully() {
        let y = embedding(&[[0.0, 0.0, 0.0], [50.0, 0.0, 0.0], [0.0, 50.0, 0.0]]);
        let r = prop1_bounds(&y, 0);
        assert!(r.holds, "{r:?}");
        assert!(r.b.is_finite());
        assert!(r.lower.is_finite());
    }

    #[test]
    fn prop2_coincident_points_collapse_to_zero() {
        let y = embedding(&[[1.0, -1.0, 0.5]; 3]);
        let r = prop2_bounds(&y, 1);
        assert_eq!(r.c, 3.0);
        assert_eq!(r.lower, 0.0);
        assert_eq!(r.upper, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn prop2_two_points_at_unit_distance_match_hand_values() {
        let y = embedding(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let r = prop2_bounds(&y, 0);
        assert_abs_diff_eq!(r.c, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.lower, 2.0 / 3.0, epsilon = 1e-15);
        let sqrt2 = 2.0_f64.sqrt();
        let expected_upper = 2.0 / 3.0 + 2.0 * (sqrt2 - 1.0) * (sqrt2 - 1.0);
        assert_abs_diff_eq!(r.upper, expected_upper, epsilon = 1e-15);
        assert!(r.lower <= 1.0 && 1.0 <= r.upper);
        assert!(r.holds);
    }

    #[test]
    fn prop2_holds_on_random_rows() {
        for seed in 10..15 {
            let y = random_embedding(50, 2.0, seed);
            for i in 0..50 {
                let r = prop2_bounds(&y, i);
                assert!(r.holds, "seed {seed} row {i}: {r:?}");
                assert!(r.lower <= r.upper + 1e-12);
            }
        }
    }

    #[test]
    fn prop3_spreads_vanish_for_centered_equal_norm_points() {
        let y = embedding(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let r = prop3_check(&y, 1e-9);
        assert_eq!(r.row_sum_spread, 0.0);
        assert_eq!(r.norm_spread, 0.0);
        assert_eq!(r.centroid_norm, 0.0);
        assert!(r.verdict);

        let octahedron = embedding(&[
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]);
        let r = prop3_check(&octahedron, 1e-9);
        assert!(r.row_sum_spread < 1e-12);
        assert!(r.norm_spread < 1e-12);
        assert!(r.verdict);
    }

    #[test]
    fn prop3_perturbed_sphere_keeps_spreads_proportional() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // Antipodal pairs center the configuration exactly; perturb by 1e-6.
        let mut pts = Vec::new();
        for _ in 0..5 {
            let v = [
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let u = [v[0] / norm, v[1] / norm, v[2] / norm];
            pts.push(u);
            pts.push([-u[0], -u[1], -u[2]]);
        }
        let mut coords: Vec<f64> = pts.iter().flatten().copied().collect();
        for c in coords.iter_mut() {
            *c += (rng.random::<f64>() - 0.5) * 2e-6;
        }
        let y = Embedding::from_coords(10, 3, coords).unwrap();
        let r = prop3_check(&y, 1e-3);
        assert!(r.row_sum_spread < 1e-4, "row-sum spread {}", r.row_sum_spread);
        assert!(r.norm_spread < 1e-5, "norm spread {}", r.norm_spread);
        assert!(r.verdict);
    }

    #[test]
    fn sphericity_is_zero_on_an_exact_sphere() {
        let y = embedding(&[
            [2.0, 0.0, 0.0],
            [-2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, -2.0, 0.0],
        ]);
        let r = sphericity(&y);
        assert_eq!(r.radius_cv, 0.0);
        assert_eq!(r.max_norm_discrepancy, 0.0);
        assert_abs_diff_eq!(r.mean_radius, 2.0, epsilon = 1e-15);
        assert_eq!(r.centroid_norm, 0.0);
    }

    #[test]
    fn sphericity_centers_before_measuring() {
        let y = Embedding::from_coords(2, 2, vec![1.0, 0.0, 3.0, 0.0]).unwrap();
        let r = sphericity(&y);
        assert_abs_diff_eq!(r.mean_radius, 1.0, epsilon = 1e-15);
        assert_eq!(r.radius_cv, 0.0);
        assert_abs_diff_eq!(r.centroid_norm, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn sphericity_handles_coincident_points() {
        let y = embedding(&[[1.0, 1.0, 1.0]; 3]);
        let r = sphericity(&y);
        assert_eq!(r.radius_cv, 0.0);
        assert_eq!(r.mean_radius, 0.0);
    }

    #[test]
    fn ball_sample_cv_matches_independent_monte_carlo() {
        fn ball_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::with_capacity(n);
            while pts.len() < n {
                let p = [
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                ];
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
                    pts.push(p);
                }
            }
            pts
        }
        let sample = ball_points(1000, 1);
        let coords: Vec<f64> = sample.iter().flatten().copied().collect();
        let y = Embedding::from_coords(1000, 3, coords).unwrap();
        let measured = sphericity(&y).radius_cv;

        // Independent draw, same distribution, direct formula.
        let oracle_pts = ball_points(1000, 2);
        let radii: Vec<f64> = oracle_pts
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .collect();
        let mean = radii.iter().sum::<f64>() / 1000.0;
        let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / 1000.0;
        let oracle = var.sqrt() / mean;

        assert!(
            (measured - oracle).abs() < 0.05 * oracle,
            "measured {measured}, oracle {oracle}"
        );
    }

    #[test]
    fn q_row_sums_are_uniform_on_a_simplex() {
        let s = 1.0 / 3.0_f64.sqrt();
        let y = embedding(&[
            [s, s, s],
            [s, -s, -s],
            [-s, s, -s],
            [-s, -s, s],
        ]);
        assert_eq!(q_row_uniformity(&y, KernelKind::Gaussian), 0.0);
        assert_eq!(q_row_uniformity(&y, KernelKind::Cauchy), 0.0);
    }

    #[test]
    fn q_row_uniformity_detects_an_outlier() {
        let y = embedding(&[
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [10.0, 10.0, 10.0],
        ]);
        assert!(q_row_uniformity(&y, KernelKind::Cauchy) > 0.1);
    }

    #[test]
    fn geodesic_matches_hand_values() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        assert_abs_diff_eq!(
            geodesic_distance(&a, &b),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        let c = [-1.0, 0.0, 0.0];
        assert_abs_diff_eq!(
            geodesic_distance(&a, &c),
            std::f64::consts::PI,
            epsilon = 1e-12
        );
        assert_eq!(geodesic_distance(&a, &a), 0.0);
        // Radius scales the arc length.
        let a2 = [2.0, 0.0, 0.0];
        let b2 = [0.0, 2.0, 0.0];
        assert_abs_diff_eq!(
            geodesic_distance(&a2, &b2),
            std::f64::consts::PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn report_aggregates_all_rows() {
        let y = random_embedding(12, 1.0, 77);
        let rep = proposition_report(&y, 1e-6);
        assert_eq!(rep.prop1.len(), 12);
        assert_eq!(rep.prop2.len(), 12);
        assert_eq!(rep.prop1_rows_holding, 12);
        assert_eq!(rep.prop2_rows_holding, 12);
        assert!(rep.prop3.verdict);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("radius_cv"));
    }
}
