//! Projection of similarity matrices onto the doubly stochastic polytope.
//!
//! Two constructions are provided. [`sinkhorn_knopp`] alternates row and
//! column normalization of a symmetric similarity matrix until every row and
//! column sum is 1 within tolerance; it preserves the zero pattern, which
//! keeps sparse inputs sparse. [`random_walk_ds`] converts an asymmetric
//! nonnegative matrix `B` (kNN graph, entropy affinities, dyadic
//! co-occurrence data) into a doubly stochastic matrix in closed form: row
//! normalization produces walk probabilities `A`, and
//! `P_ij = sum_k A_ik A_jk / sum_v A_vk` is the two-step walk probability
//! between row indices `i` and `j` via any column `k`. The result is
//! symmetric and doubly stochastic by construction, with no iteration.

use serde::Serialize;
use thiserror::Error;

use crate::matrix::{max_deviation, RectNonnegMatrix, SparseSymMatrix, StochasticAffinity};

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("row {row} has zero sum and cannot be normalized")]
    ZeroRow { row: usize },
    #[error(
        "did not reach tolerance {tol:.1e} within {} iterations \
         (row dev {:.3e}, col dev {:.3e}); the input may lack doubly stochastic support",
        report.iterations,
        report.max_row_dev,
        report.max_col_dev
    )]
    NotConverged { report: NormalizationReport, tol: f64 },
    #[error(
        "constructed matrix failed its doubly-stochasticity certificate \
         (row dev {row_dev:.3e}, col dev {col_dev:.3e}, tol {tol:.1e})"
    )]
    CertificateViolation { row_dev: f64, col_dev: f64, tol: f64 },
}

/// Stopping rule for the Sinkhorn-Knopp iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SinkhornConfig {
    /// Maximum allowed |row sum - 1| and |column sum - 1|.
    pub tol: f64,
    /// Iteration cap; one iteration is a full row + column sweep.
    pub max_iters: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 1000 }
    }
}

/// Outcome of a normalization run.
///
/// `converged` holds exactly when both final deviations are within the
/// tolerance the run was configured with. For the closed-form random-walk
/// construction `iterations` is 1 and the `diag_deficit` fields record the
/// diagonal mass dropped for the SNE input.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormalizationReport {
    pub iterations: usize,
    pub max_row_dev: f64,
    pub max_col_dev: f64,
    pub converged: bool,
    /// Largest diagonal value dropped from the certified matrix (0 when the
    /// construction never produces a diagonal, as with Sinkhorn on a
    /// zero-diagonal affinity).
    pub max_diag_deficit: f64,
    /// Mean dropped diagonal value.
    pub mean_diag_deficit: f64,
}

/// Doubly stochastic scaling of a symmetric similarity matrix by alternating
/// row and column normalization, starting from `P = S`:
///
/// ```text
/// P_ij <- P_ij / sum_u P_iu        (row pass)
/// P_ij <- P_ij / sum_v P_vj        (column pass)
/// ```
///
/// Deviations are checked after each full sweep. On success the iterate is
/// symmetrized as `(P + P')/2` (alternating normalization breaks symmetry
/// transiently; the limit for symmetric input is symmetric) and certified.
/// The zero pattern of `S` is preserved: output support is contained in the
/// input support.
///
/// Fails if a row sum is zero at the start, or if the deviations do not
/// reach `cfg.tol` within `cfg.max_iters` sweeps — inputs without doubly
/// stochastic support (a star graph, for example) cannot converge, and
/// downstream stages rely on the certificate, so a best-effort result is
/// not returned.
pub fn sinkhorn_knopp(
    s: &SparseSymMatrix,
    cfg: &SinkhornConfig,
) -> Result<(StochasticAffinity, NormalizationReport), NormalizeError> {
    let n = s.node_count();
    for (row, sum) in s.row_sums().iter().enumerate() {
        if *sum <= 0.0 {
            return Err(NormalizeError::ZeroRow { row });
        }
    }

    // Work on a general (not necessarily symmetric) copy: the row pass and
    // the column pass scale P_ij and P_ji by different factors.
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        for row in rows.iter_mut() {
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            let inv = 1.0 / sum;
            for entry in row.iter_mut() {
                entry.1 *= inv;
            }
        }
        let mut col_sums = vec![0.0; n];
        for row in &rows {
            for &(j, w) in row {
                col_sums[j] += w;
            }
        }
        for row in rows.iter_mut() {
            for entry in row.iter_mut() {
                entry.1 /= col_sums[entry.0];
            }
        }

        let mut post_col = vec![0.0; n];
        let mut post_row = vec![0.0; n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                post_row[i] += w;
                post_col[j] += w;
            }
        }
        let row_dev = max_deviation(&post_row);
        let col_dev = max_deviation(&post_col);
        if row_dev <= cfg.tol && col_dev <= cfg.tol {
            break;
        }
    }

    // Symmetrize: (P + P')/2. This cannot worsen the deviations, since the
    // symmetrized row sum is the mean of a row sum and a column sum.
    let mut sym_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            if i < j {
                let wt = transpose_of(&rows, i, j);
                let avg = (w + wt) / 2.0;
                if avg > 0.0 {
                    sym_rows[i].push((j, avg));
                    sym_rows[j].push((i, avg));
                }
            }
        }
    }
    let matrix = SparseSymMatrix::from_rows_unchecked(n, sym_rows);

    match StochasticAffinity::certify(matrix, vec![0.0; n], cfg.tol) {
        Ok(aff) => {
            let report = NormalizationReport {
                iterations,
                max_row_dev: aff.max_row_dev(),
                max_col_dev: aff.max_col_dev(),
                converged: true,
                max_diag_deficit: 0.0,
                mean_diag_deficit: 0.0,
            };
            Ok((aff, report))
        }
        Err((max_row_dev, max_col_dev)) => {
            let report = NormalizationReport {
                iterations,
                max_row_dev,
                max_col_dev,
                converged: false,
                max_diag_deficit: 0.0,
                mean_diag_deficit: 0.0,
            };
            Err(NormalizeError::NotConverged { report, tol: cfg.tol })
        }
    }
}

fn transpose_of(rows: &[Vec<(usize, f64)>], i: usize, j: usize) -> f64 {
    rows[j]
        .iter()
        .find(|&&(c, _)| c == i)
        .map(|&(_, w)| w)
        .unwrap_or(0.0)
}

/// Certificate tolerance for the closed-form construction: exact in
/// arithmetic, so only summation roundoff is allowed, scaled with n.
fn random_walk_cert_tol(n: usize) -> f64 {
    (n as f64 * 4.0 * f64::EPSILON).max(1e-12)
}

/// Doubly stochastic matrix from an asymmetric nonnegative matrix via the
/// two-step random walk:
///
/// ```text
/// A_ik = B_ik / sum_u B_iu
/// P_ij = sum_k A_ik A_jk / sum_v A_vk
/// ```
///
/// Each unordered pair (i, j) is accumulated exactly once, so the result is
/// bit-exactly symmetric. Columns of `A` with zero sum contribute nothing
/// and are skipped. The full `P`, diagonal included, is certified doubly
/// stochastic; the diagonal is then dropped for the SNE input (self-pairs
/// are excluded there) and retained in the affinity's `self_affinity`, with
/// the resulting per-row deficit summarized in the report.
///
/// Fails on a zero row of `B`, which has no walk distribution.
pub fn random_walk_ds(
    b: &RectNonnegMatrix,
) -> Result<(StochasticAffinity, NormalizationReport), NormalizeError> {
    let n = b.row_count();
    let m = b.col_count();
    let row_sums = b.row_sums();
    for (row, sum) in row_sums.iter().enumerate() {
        if *sum <= 0.0 {
            return Err(NormalizeError::ZeroRow { row });
        }
    }

    // Column view of A (row-normalized B); rows are visited in order, so
    // each column list is sorted by row index and accumulation order is
    // deterministic.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for i in 0..n {
        for &(k, w) in b.row(i) {
            cols[k].push((i, w / row_sums[i]));
        }
    }

    // Upper-triangular accumulation of P, one entry per unordered pair.
    let mut upper: Vec<std::collections::BTreeMap<usize, f64>> =
        vec![std::collections::BTreeMap::new(); n];
    for col in &cols {
        if col.is_empty() {
            continue;
        }
        let col_sum: f64 = col.iter().map(|&(_, a)| a).sum();
        for (idx, &(i, ai)) in col.iter().enumerate() {
            for &(j, aj) in &col[idx..] {
                *upper[i].entry(j).or_insert(0.0) += ai * aj / col_sum;
            }
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut self_affinity = vec![0.0; n];
    for (i, entries) in upper.into_iter().enumerate() {
        for (j, w) in entries {
            if i == j {
                self_affinity[i] = w;
            } else if w > 0.0 {
                rows[i].push((j, w));
                rows[j].push((i, w));
            }
        }
    }
    let matrix = SparseSymMatrix::from_rows_unchecked(n, rows);

    let tol = random_walk_cert_tol(n);
    let max_diag_deficit = self_affinity.iter().copied().fold(0.0, f64::max);
    let mean_diag_deficit = self_affinity.iter().sum::<f64>() / n as f64;
    match StochasticAffinity::certify(matrix, self_affinity, tol) {
        Ok(aff) => {
            let report = NormalizationReport {
                iterations: 1,
                max_row_dev: aff.max_row_dev(),
                max_col_dev: aff.max_col_dev(),
                converged: true,
                max_diag_deficit,
                mean_diag_deficit,
            };
            Ok((aff, report))
        }
        Err((row_dev, col_dev)) => Err(NormalizeError::CertificateViolation { row_dev, col_dev, tol }),
    }
}

/// Row/column sum deviations of a symmetric affinity, measured exactly over
/// stored entries.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DsCheck {
    pub max_row_dev: f64,
    pub max_col_dev: f64,
    pub pass: bool,
}

pub fn check_doubly_stochastic(m: &SparseSymMatrix, tol: f64) -> DsCheck {
    let max_row_dev = max_deviation(&m.row_sums());
    let max_col_dev = max_deviation(&m.col_sums());
    DsCheck { max_row_dev, max_col_dev, pass: max_row_dev <= tol && max_col_dev <= tol }
}

/// Same check on a certified affinity, retained diagonal included.
pub fn check_doubly_stochastic_full(aff: &StochasticAffinity, tol: f64) -> DsCheck {
    let max_row_dev = max_deviation(&aff.full_row_sums());
    let max_col_dev = max_deviation(&aff.full_col_sums());
    DsCheck { max_row_dev, max_col_dev, pass: max_row_dev <= tol && max_col_dev <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_from(aff: &StochasticAffinity) -> Vec<Vec<f64>> {
        let n = aff.node_count();
        let mut out = vec![vec![0.0; n]; n];
        for (i, j, w) in aff.matrix().iter() {
            out[i][j] = w;
        }
        for (i, &d) in aff.self_affinity().iter().enumerate() {
            out[i][i] = d;
        }
        out
    }

    #[test]
    fn permutation_pattern_is_fixed_point() {
        let s = SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0)]).unwrap();
        let (aff, report) = sinkhorn_knopp(&s, &SinkhornConfig::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
        assert_eq!(aff.matrix().get(0, 1), 1.0);
        assert_eq!(aff.max_row_dev(), 0.0);
    }

    #[test]
    fn two_by_two_forces_unit_weights() {
        let s = SparseSymMatrix::from_triplets(2, &[(0, 1, 3.0)]).unwrap();
        let (aff, report) = sinkhorn_knopp(&s, &SinkhornConfig::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert_eq!(aff.matrix().get(0, 1), 1.0);
        assert_eq!(aff.matrix().get(1, 0), 1.0);
    }

    /// Independent long-run oracle: dense row/column normalization driven to
    /// its fixed point (capped at 1e5 sweeps; identical sweeps once the
    /// deviations hit machine epsilon, so convergence is detected early).
    fn dense_sinkhorn_oracle(mut m: Vec<Vec<f64>>, sweeps: usize) -> Vec<Vec<f64>> {
        let n = m.len();
        for _ in 0..sweeps {
            for row in m.iter_mut() {
                let s: f64 = row.iter().sum();
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
            for j in 0..n {
                let s: f64 = (0..n).map(|i| m[i][j]).sum();
                for row in m.iter_mut() {
                    row[j] /= s;
                }
            }
            let worst = m
                .iter()
                .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max);
            if worst < 1e-15 {
                break;
            }
        }
        m
    }

    #[test]
    fn dense_positive_matches_long_run_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 3;
        let mut triplets = Vec::new();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w: f64 = rng.random::<f64>() + 0.1;
                triplets.push((i, j, w));
                dense[i][j] = w;
                dense[j][i] = w;
            }
        }
        let s = SparseSymMatrix::from_triplets(n, &triplets).unwrap();
        let (aff, report) = sinkhorn_knopp(&s, &SinkhornConfig::default()).unwrap();
        assert!(report.converged);
        assert!(report.max_row_dev <= 1e-8);
        assert!(report.max_col_dev <= 1e-8);

        let oracle = dense_sinkhorn_oracle(dense, 100_000);
        let got = dense_from(&aff);
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (got[i][j] - oracle[i][j]).abs() < 1e-6,
                    "entry ({i},{j}): {} vs oracle {}",
                    got[i][j],
                    oracle[i][j]
                );
            }
        }
    }

    #[test]
    fn zero_row_is_rejected() {
        // Node 2 is isolated.
        let s = SparseSymMatrix::from_triplets(3, &[(0, 1, 1.0)]).unwrap();
        let err = sinkhorn_knopp(&s, &SinkhornConfig::default()).unwrap_err();
        assert!(matches!(err, NormalizeError::ZeroRow { row: 2 }));
    }

    #[test]
    fn star_graph_has_no_ds_support_and_fails() {
        // K_{1,3}: leaf rows force p_i0 = 1, so column 0 sums to 3.
        let s = SparseSymMatrix::from_triplets(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
            .unwrap();
        let err = sinkhorn_knopp(&s, &SinkhornConfig { tol: 1e-8, max_iters: 200 }).unwrap_err();
        match err {
            NormalizeError::NotConverged { report, .. } => {
                assert!(!report.converged);
                assert_eq!(report.iterations, 200);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn random_walk_identity_returns_home() {
        let b = RectNonnegMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (aff, report) = random_walk_ds(&b).unwrap();
        // P is the 2x2 identity before the diagonal drop.
        assert_eq!(aff.self_affinity(), &[1.0, 1.0]);
        assert_eq!(aff.matrix().entry_count(), 0);
        assert_eq!(report.max_diag_deficit, 1.0);
        assert!(report.converged);
    }

    #[test]
    fn random_walk_uniform_two_by_two() {
        let b = RectNonnegMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let (aff, _) = random_walk_ds(&b).unwrap();
        assert!((aff.matrix().get(0, 1) - 0.5).abs() < 1e-15);
        assert!((aff.self_affinity()[0] - 0.5).abs() < 1e-15);
        assert!((aff.self_affinity()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_walk_three_by_two_hand_values() {
        let b = RectNonnegMatrix::from_dense(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let (aff, _) = random_walk_ds(&b).unwrap();
        let p = dense_from(&aff);
        let expected = [
            [2.0 / 3.0, 0.0, 1.0 / 3.0],
            [0.0, 2.0 / 3.0, 1.0 / 3.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (p[i][j] - expected[i][j]).abs() < 1e-15,
                    "entry ({i},{j}): {} vs {}",
                    p[i][j],
                    expected[i][j]
                );
            }
            let row_sum: f64 = p[i].iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn random_walk_rejects_zero_row() {
        let b =
            RectNonnegMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 1.0)]).unwrap();
        let err = random_walk_ds(&b).unwrap_err();
        assert!(matches!(err, NormalizeError::ZeroRow { row: 1 }));
    }

    #[test]
    fn random_walk_skips_unused_columns() {
        // Column 1 has no entries at all.
        let b = RectNonnegMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (1, 2, 2.0)]).unwrap();
        let (aff, _) = random_walk_ds(&b).unwrap();
        assert_eq!(aff.self_affinity(), &[1.0, 1.0]);
    }

    #[test]
    fn check_permutation_passes_exactly() {
        let m = SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0)]).unwrap();
        let check = check_doubly_stochastic(&m, 1e-12);
        assert_eq!(check.max_row_dev, 0.0);
        assert_eq!(check.max_col_dev, 0.0);
        assert!(check.pass);
    }

    #[test]
    fn check_full_half_matrix_passes() {
        // All-0.5 dense 2x2 arises from the uniform random walk; the full
        // sums include the retained diagonal.
        let b = RectNonnegMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let (aff, _) = random_walk_ds(&b).unwrap();
        let check = check_doubly_stochastic_full(&aff, 1e-12);
        assert_eq!(check.max_row_dev, 0.0);
        assert_eq!(check.max_col_dev, 0.0);
        assert!(check.pass);
    }

    #[test]
    fn check_reports_deficient_row() {
        let m = SparseSymMatrix::from_triplets(
            3,
            &[(0, 1, 0.4), (0, 2, 0.5), (1, 2, 0.6)],
        )
        .unwrap();
        let check = check_doubly_stochastic(&m, 1e-3);
        assert!((check.max_row_dev - 0.1).abs() < 1e-15);
        assert!(!check.pass);
    }
}
