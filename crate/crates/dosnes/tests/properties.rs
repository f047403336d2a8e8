//! Randomized invariants for the normalization and embedding primitives.

use proptest::prelude::*;

use dosnes::diagnostics::{prop1_bounds, prop2_bounds, prop3_check, sphericity};
use dosnes::normalize::check_doubly_stochastic_full;
use dosnes::{
    compute_q, gradient, kl_objective, project_to_sphere, random_walk_ds, sinkhorn_knopp,
    Embedding, KernelKind, OptimizerConfig, RectNonnegMatrix, SinkhornConfig, SparseSymMatrix,
    TargetDistribution,
};

fn embedding_strategy(d: usize) -> impl Strategy<Value = Embedding> {
    (2usize..=20).prop_flat_map(move |n| {
        prop::collection::vec(-4.0..4.0f64, n * d)
            .prop_map(move |coords| Embedding::from_coords(n, d, coords).unwrap())
    })
}

/// Symmetric positive off-diagonal weights for an n-point target.
fn target_strategy() -> impl Strategy<Value = TargetDistribution> {
    (3usize..=15).prop_flat_map(|n| {
        prop::collection::vec(0.05..1.0f64, n * (n - 1) / 2).prop_map(move |upper| {
            let mut dense = vec![0.0; n * n];
            let mut it = upper.iter();
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = *it.next().unwrap();
                    dense[i * n + j] = w;
                    dense[j * n + i] = w;
                }
            }
            TargetDistribution::from_dense(n, &dense).unwrap()
        })
    })
}

/// Dense strictly positive rectangular matrix (every row sum positive).
fn rect_strategy() -> impl Strategy<Value = RectNonnegMatrix> {
    (2usize..=8, 2usize..=8).prop_flat_map(|(r, c)| {
        prop::collection::vec(0.01..1.0f64, r * c).prop_map(move |vals| {
            let rows: Vec<Vec<f64>> = vals.chunks(c).map(|ch| ch.to_vec()).collect();
            RectNonnegMatrix::from_dense(&rows).unwrap()
        })
    })
}

/// Strictly positive symmetric matrix with zero diagonal: total support,
/// so Sinkhorn-Knopp always balances it.
fn sym_strategy() -> impl Strategy<Value = SparseSymMatrix> {
    (3usize..=12).prop_flat_map(|n| {
        prop::collection::vec(0.05..1.0f64, n * (n - 1) / 2).prop_map(move |upper| {
            let mut triplets = Vec::new();
            let mut it = upper.iter();
            for i in 0..n {
                for j in (i + 1)..n {
                    triplets.push((i, j, *it.next().unwrap()));
                }
            }
            SparseSymMatrix::from_triplets(n, &triplets).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn random_walk_output_is_doubly_stochastic(b in rect_strategy()) {
        let (aff, report) = random_walk_ds(&b).unwrap();
        prop_assert!(report.converged);
        let check = check_doubly_stochastic_full(&aff, 1e-12);
        prop_assert!(check.pass, "row dev {} col dev {}", check.max_row_dev, check.max_col_dev);
    }

    #[test]
    fn random_walk_output_is_bitwise_symmetric(b in rect_strategy()) {
        let m = random_walk_ds(&b).unwrap().0;
        let m = m.matrix();
        let n = m.node_count();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn sinkhorn_balances_positive_symmetric_input(s in sym_strategy()) {
        let cfg = SinkhornConfig::default();
        let (aff, report) = sinkhorn_knopp(&s, &cfg).unwrap();
        prop_assert!(report.converged);
        prop_assert!(report.iterations <= cfg.max_iters);
        let check = check_doubly_stochastic_full(&aff, 1e-7);
        prop_assert!(check.pass, "row dev {} col dev {}", check.max_row_dev, check.max_col_dev);
    }

    #[test]
    fn sinkhorn_preserves_the_zero_pattern(s in sym_strategy()) {
        let (aff, _) = sinkhorn_knopp(&s, &SinkhornConfig::default()).unwrap();
        let out = aff.matrix();
        for i in 0..s.node_count() {
            for j in 0..s.node_count() {
                prop_assert_eq!(s.get(i, j) == 0.0, out.get(i, j) == 0.0);
            }
        }
    }

    #[test]
    fn q_is_a_probability_distribution(y in embedding_strategy(3)) {
        for kernel in [KernelKind::Gaussian, KernelKind::Cauchy] {
            let qm = compute_q(&y, kernel);
            let n = y.len();
            let total: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| qm.normalized(i, j))
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-10, "kernel {kernel:?}: total {total}");
            prop_assert_eq!(qm.normalized(1, 1), 0.0);
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero(p in target_strategy(), seed in 0u64..1000) {
        let n = p.len();
        let y = dosnes::initialize(n, 3, seed, false).unwrap();
        for kernel in [KernelKind::Gaussian, KernelKind::Cauchy] {
            let g = gradient(&p, &y, kernel);
            for c in 0..3 {
                let s: f64 = (0..n).map(|i| g[i * 3 + c]).sum();
                prop_assert!(s.abs() < 1e-10, "kernel {kernel:?} coord {c}: sum {s}");
            }
        }
    }

    #[test]
    fn kl_is_nonnegative(p in target_strategy(), seed in 0u64..1000) {
        let y = dosnes::initialize(p.len(), 3, seed, true).unwrap();
        let kl = kl_objective(&p, &y, KernelKind::Cauchy).unwrap();
        prop_assert!(kl >= -1e-12, "kl {kl}");
    }

    #[test]
    fn projection_equalizes_norms(y in embedding_strategy(3)) {
        let proj = project_to_sphere(&y);
        let r0 = proj.radius(0);
        for i in 0..proj.len() {
            prop_assert!((proj.radius(i) - r0).abs() <= 1e-12 * (1.0 + r0));
        }
    }

    #[test]
    fn projection_fixes_the_constraint_set(y in embedding_strategy(3)) {
        // Members of the constraint set (centered, equal norms) are fixed
        // points; build one by pairing every projected point with its
        // antipode.
        let proj = project_to_sphere(&y);
        let n = proj.len();
        let mut coords = Vec::with_capacity(2 * n * 3);
        coords.extend_from_slice(proj.coords());
        coords.extend(proj.coords().iter().map(|v| -v));
        let fixed = Embedding::from_coords(2 * n, 3, coords).unwrap();
        let again = project_to_sphere(&fixed);
        for (a, b) in fixed.coords().iter().zip(again.coords()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn proposition_bounds_hold_on_random_clouds(y in embedding_strategy(3)) {
        for i in 0..y.len() {
            let p1 = prop1_bounds(&y, i);
            prop_assert!(p1.holds, "prop1 row {i}: {p1:?}");
            let p2 = prop2_bounds(&y, i);
            prop_assert!(p2.holds, "prop2 row {i}: {p2:?}");
            prop_assert!(p2.upper.is_finite());
        }
    }

    #[test]
    fn prop3_identity_holds_on_random_clouds(y in embedding_strategy(3)) {
        // After centering, sum_j |y_i - y_j|^2 = n |y_i|^2 + sum_j |y_j|^2.
        let n = y.len();
        let c = y.centroid();
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| y.point(i).iter().zip(&c).map(|(v, cv)| v - cv).collect())
            .collect();
        let sq: Vec<f64> = pts.iter().map(|p| p.iter().map(|v| v * v).sum()).collect();
        let total: f64 = sq.iter().sum();
        for i in 0..n {
            let row: f64 = pts
                .iter()
                .map(|q| {
                    pts[i].iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .sum();
            let expected = n as f64 * sq[i] + total;
            prop_assert!(
                (row - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
                "row {i}: {row} vs {expected}"
            );
        }
        prop_assert!(prop3_check(&y, 1e-6).verdict);
    }

    #[test]
    fn sphericity_detects_exact_centered_spheres(y in embedding_strategy(3)) {
        // Sphericity measures the radii about the centroid, so feed it a
        // cloud that is exactly a centered sphere: the antipodal double of
        // a projected cloud.
        let proj = project_to_sphere(&y);
        let n = proj.len();
        let mut coords = Vec::with_capacity(2 * n * 3);
        coords.extend_from_slice(proj.coords());
        coords.extend(proj.coords().iter().map(|v| -v));
        let sphere = Embedding::from_coords(2 * n, 3, coords).unwrap();
        let report = sphericity(&sphere);
        prop_assert!(report.radius_cv < 1e-12, "cv {}", report.radius_cv);
        prop_assert!(report.centroid_norm <= 1e-12 * (1.0 + report.mean_radius));
        prop_assert!(report.max_norm_discrepancy <= 1e-12 * (1.0 + report.mean_radius));
    }

    #[test]
    fn runs_are_deterministic_in_the_seed(p in target_strategy()) {
        let cfg = OptimizerConfig { max_iters: 5, seed: 42, ..OptimizerConfig::default() };
        let (y1, t1) = dosnes::run(&p, KernelKind::Cauchy, &cfg).unwrap();
        let (y2, t2) = dosnes::run(&p, KernelKind::Cauchy, &cfg).unwrap();
        prop_assert_eq!(y1.coords(), y2.coords());
        prop_assert_eq!(t1.kl, t2.kl);
    }
}
