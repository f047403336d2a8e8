//! Sparse nonnegative matrix storage for graph affinities.
//!
//! Two storage types cover everything the pipeline consumes: [`SparseSymMatrix`]
//! for undirected weighted graphs (symmetric, zero diagonal by convention) and
//! [`RectNonnegMatrix`] for asymmetric or rectangular neighborhood data.
//! [`StochasticAffinity`] wraps a symmetric matrix together with a
//! doubly-stochasticity certificate produced by the normalization routines.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("index ({i}, {j}) out of bounds for {n}x{m} matrix")]
    IndexOutOfBounds { i: usize, j: usize, n: usize, m: usize },
    #[error("negative weight {w} at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, w: f64 },
    #[error("non-finite weight at ({i}, {j})")]
    NonFiniteWeight { i: usize, j: usize },
    #[error("diagonal entry at ({i}, {i}) not allowed in a symmetric affinity")]
    DiagonalEntry { i: usize },
    #[error("conflicting weights for entry ({i}, {j}): {a} vs {b}")]
    ConflictingDuplicate { i: usize, j: usize, a: f64, b: f64 },
    #[error("matrix is not square ({n}x{m})")]
    NotSquare { n: usize, m: usize },
}

/// Symmetric nonnegative sparse matrix with zero diagonal.
///
/// Self-similarities are excluded by convention: the SNE objective sets
/// q_ii = 0 and p_ii = 0, so diagonal entries are rejected at construction.
/// Only strictly positive weights are stored; symmetry is maintained by
/// storing both (i, j) and (j, i).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymMatrix {
    /// Build from (i, j, w) triplets. Each triplet stands for the unordered
    /// pair {i, j}: listing one direction is enough, and listing both is
    /// accepted as long as the weights agree.
    pub fn from_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, MatrixError> {
        let mut m = Self {
            n,
            rows: vec![Vec::new(); n],
        };
        for &(i, j, w) in triplets {
            m.insert_pair(i, j, w)?;
        }
        m.finish();
        Ok(m)
    }

    fn insert_pair(&mut self, i: usize, j: usize, w: f64) -> Result<(), MatrixError> {
        if i >= self.n || j >= self.n {
            return Err(MatrixError::IndexOutOfBounds { i, j, n: self.n, m: self.n });
        }
        if !w.is_finite() {
            return Err(MatrixError::NonFiniteWeight { i, j });
        }
        if w < 0.0 {
            return Err(MatrixError::NegativeWeight { i, j, w });
        }
        if i == j {
            return Err(MatrixError::DiagonalEntry { i });
        }
        if let Some(&(_, existing)) = self.rows[i].iter().find(|&&(c, _)| c == j) {
            if existing != w {
                return Err(MatrixError::ConflictingDuplicate { i, j, a: existing, b: w });
            }
            return Ok(());
        }
        if w == 0.0 {
            return Ok(());
        }
        self.rows[i].push((j, w));
        self.rows[j].push((i, w));
        Ok(())
    }

    fn finish(&mut self) {
        for row in &mut self.rows {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
    }

    /// Construct directly from per-row adjacency lists that are already
    /// symmetric, strictly positive and diagonal-free. Used by the
    /// normalization routines, which maintain the invariants themselves.
    pub(crate) fn from_rows_unchecked(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), n);
        let mut m = Self { n, rows };
        m.finish();
        m
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn entry_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Entries of row `i` as (column, weight) pairs, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// All stored entries, both orientations included.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|pos| self.rows[i][pos].1)
            .unwrap_or(0.0)
    }

    /// Per-row sums over stored entries.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    /// Per-column sums, accumulated independently of [`Self::row_sums`] so the
    /// symmetry invariant stays observable.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for (_, j, w) in self.iter() {
            sums[j] += w;
        }
        sums
    }

    /// Total sum over all stored entries.
    pub fn total(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum::<f64>())
            .sum()
    }
}

/// Rectangular nonnegative sparse matrix (rows need not sum to anything).
///
/// Houses asymmetric neighborhood data: kNN graphs, entropy affinities, or
/// dyadic co-occurrence data such as author-paper matrices. Rows may be
/// empty here; consumers that need positive row sums check for themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct RectNonnegMatrix {
    n: usize,
    m: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl RectNonnegMatrix {
    pub fn from_triplets(
        n: usize,
        m: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, MatrixError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in triplets {
            if i >= n || j >= m {
                return Err(MatrixError::IndexOutOfBounds { i, j, n, m });
            }
            if !w.is_finite() {
                return Err(MatrixError::NonFiniteWeight { i, j });
            }
            if w < 0.0 {
                return Err(MatrixError::NegativeWeight { i, j, w });
            }
            if let Some(&(_, existing)) = rows[i].iter().find(|&&(c, _)| c == j) {
                if existing != w {
                    return Err(MatrixError::ConflictingDuplicate { i, j, a: existing, b: w });
                }
                continue;
            }
            if w == 0.0 {
                continue;
            }
            rows[i].push((j, w));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Self { n, m, rows })
    }

    /// Dense row-major constructor, mostly for tests and small examples.
    pub fn from_dense(values: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let n = values.len();
        let m = values.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in values.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    triplets.push((i, j, w));
                }
            }
        }
        Self::from_triplets(n, m, &triplets)
    }

    pub fn row_count(&self) -> usize {
        self.n
    }

    pub fn col_count(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    /// Per-row sums; an empty row sums to 0.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.m];
        for (_, j, w) in self.iter() {
            sums[j] += w;
        }
        sums
    }
}

/// Symmetrize a square nonnegative matrix: result is (M + Mᵀ)/2 with the
/// diagonal dropped.
pub fn symmetrize(m: &RectNonnegMatrix) -> Result<SparseSymMatrix, MatrixError> {
    if m.row_count() != m.col_count() {
        return Err(MatrixError::NotSquare { n: m.row_count(), m: m.col_count() });
    }
    let n = m.row_count();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in m.rows.iter().enumerate() {
        for &(j, w) in row {
            if i == j {
                continue;
            }
            let avg = (w + transpose_entry(m, i, j)) / 2.0;
            if i < j && avg > 0.0 {
                rows[i].push((j, avg));
                rows[j].push((i, avg));
            } else if i > j && transpose_entry(m, i, j) == 0.0 && avg > 0.0 {
                // (j, i) absent: this pair was not handled from the upper side.
                rows[j].push((i, avg));
                rows[i].push((j, avg));
            }
        }
    }
    Ok(SparseSymMatrix::from_rows_unchecked(n, rows))
}

fn transpose_entry(m: &RectNonnegMatrix, i: usize, j: usize) -> f64 {
    m.rows[j]
        .binary_search_by_key(&i, |&(c, _)| c)
        .map(|pos| m.rows[j][pos].1)
        .unwrap_or(0.0)
}

/// A symmetric affinity with a doubly-stochasticity certificate.
///
/// `matrix` holds the off-diagonal part; for constructions that produce a
/// positive diagonal (the two-step random walk does), the dropped diagonal
/// values are kept in `self_affinity` so the full row/column sums remain
/// reconstructable. The recorded deviations are measured on the full matrix,
/// diagonal included.
#[derive(Debug, Clone)]
pub struct StochasticAffinity {
    matrix: SparseSymMatrix,
    self_affinity: Vec<f64>,
    max_row_dev: f64,
    max_col_dev: f64,
    tol: f64,
}

impl StochasticAffinity {
    /// Certify `matrix` (plus an optional retained diagonal) as doubly
    /// stochastic within `tol`. Returns the measured deviations on failure.
    pub(crate) fn certify(
        matrix: SparseSymMatrix,
        self_affinity: Vec<f64>,
        tol: f64,
    ) -> Result<Self, (f64, f64)> {
        let n = matrix.node_count();
        debug_assert_eq!(self_affinity.len(), n);
        let mut row_sums = matrix.row_sums();
        let mut col_sums = matrix.col_sums();
        for i in 0..n {
            row_sums[i] += self_affinity[i];
            col_sums[i] += self_affinity[i];
        }
        let max_row_dev = max_deviation(&row_sums);
        let max_col_dev = max_deviation(&col_sums);
        if max_row_dev <= tol && max_col_dev <= tol {
            Ok(Self { matrix, self_affinity, max_row_dev, max_col_dev, tol })
        } else {
            Err((max_row_dev, max_col_dev))
        }
    }

    pub fn matrix(&self) -> &SparseSymMatrix {
        &self.matrix
    }

    /// Diagonal values dropped from the SNE input (all zero for inputs that
    /// never had a diagonal, e.g. Sinkhorn output of a graph affinity).
    pub fn self_affinity(&self) -> &[f64] {
        &self.self_affinity
    }

    pub fn node_count(&self) -> usize {
        self.matrix.node_count()
    }

    pub fn max_row_dev(&self) -> f64 {
        self.max_row_dev
    }

    pub fn max_col_dev(&self) -> f64 {
        self.max_col_dev
    }

    /// Tolerance the certificate was issued at.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Row sums of the full matrix, retained diagonal included.
    pub fn full_row_sums(&self) -> Vec<f64> {
        let mut sums = self.matrix.row_sums();
        for (s, d) in sums.iter_mut().zip(&self.self_affinity) {
            *s += d;
        }
        sums
    }

    /// Column sums of the full matrix, retained diagonal included.
    pub fn full_col_sums(&self) -> Vec<f64> {
        let mut sums = self.matrix.col_sums();
        for (s, d) in sums.iter_mut().zip(&self.self_affinity) {
            *s += d;
        }
        sums
    }
}

pub(crate) fn max_deviation(sums: &[f64]) -> f64 {
    sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sums_permutation_pattern() {
        let m = SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(m.row_sums(), vec![1.0, 1.0]);
    }

    #[test]
    fn row_sums_empty_row_is_zero() {
        let m = RectNonnegMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 2.0)]).unwrap();
        assert_eq!(m.row_sums(), vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn row_sums_direct_summation() {
        let m = SparseSymMatrix::from_triplets(
            3,
            &[(0, 1, 0.25), (0, 2, 0.5), (1, 0, 0.25), (2, 0, 0.5)],
        )
        .unwrap();
        assert_eq!(m.row_sums(), vec![0.75, 0.25, 0.5]);
    }

    #[test]
    fn symmetrize_symmetric_input_unchanged() {
        let m = RectNonnegMatrix::from_dense(&[
            vec![0.0, 2.0, 0.5],
            vec![2.0, 0.0, 1.0],
            vec![0.5, 1.0, 0.0],
        ])
        .unwrap();
        let s = symmetrize(&m).unwrap();
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(0, 2), 0.5);
        assert_eq!(s.get(1, 2), 1.0);
        assert_eq!(s.entry_count(), 6);
    }

    #[test]
    fn symmetrize_averages_missing_transpose() {
        let m = RectNonnegMatrix::from_triplets(2, 2, &[(0, 1, 2.0)]).unwrap();
        let s = symmetrize(&m).unwrap();
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(1, 0), 1.0);
    }

    #[test]
    fn symmetrize_averages_conflicting_pair() {
        let m = RectNonnegMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 3.0)]).unwrap();
        let s = symmetrize(&m).unwrap();
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 2.0);
    }

    #[test]
    fn symmetrize_drops_diagonal() {
        let m = RectNonnegMatrix::from_triplets(2, 2, &[(0, 0, 5.0), (0, 1, 1.0)]).unwrap();
        let s = symmetrize(&m).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 0.5);
        assert_eq!(s.get(1, 0), 0.5);
    }

    #[test]
    fn symmetrize_row_and_col_sums_agree() {
        let m = RectNonnegMatrix::from_dense(&[
            vec![0.0, 1.0, 0.0, 4.0],
            vec![3.0, 0.0, 0.0, 0.0],
            vec![1.0, 2.0, 0.0, 0.5],
            vec![0.0, 0.0, 1.5, 0.0],
        ])
        .unwrap();
        let s = symmetrize(&m).unwrap();
        assert_eq!(s.row_sums(), s.col_sums());
    }

    #[test]
    fn rejects_diagonal_and_negative() {
        assert!(matches!(
            SparseSymMatrix::from_triplets(2, &[(0, 0, 1.0)]),
            Err(MatrixError::DiagonalEntry { i: 0 })
        ));
        assert!(matches!(
            SparseSymMatrix::from_triplets(2, &[(0, 1, -1.0)]),
            Err(MatrixError::NegativeWeight { .. })
        ));
    }

    #[test]
    fn rejects_conflicting_duplicates() {
        let r = SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 2.0)]);
        assert!(matches!(r, Err(MatrixError::ConflictingDuplicate { .. })));
    }

    #[test]
    fn zero_weights_are_not_stored() {
        let m = SparseSymMatrix::from_triplets(3, &[(0, 1, 0.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(m.entry_count(), 2);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn certify_records_deviations() {
        let m = SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0)]).unwrap();
        let aff = StochasticAffinity::certify(m, vec![0.0, 0.0], 1e-12).unwrap();
        assert_eq!(aff.max_row_dev(), 0.0);
        assert_eq!(aff.max_col_dev(), 0.0);
        assert_eq!(aff.full_row_sums(), vec![1.0, 1.0]);
    }

    #[test]
    fn certify_rejects_out_of_tolerance() {
        let m = SparseSymMatrix::from_triplets(2, &[(0, 1, 0.9)]).unwrap();
        let r = StochasticAffinity::certify(m, vec![0.0, 0.0], 1e-3);
        let (row_dev, col_dev) = r.err().unwrap();
        assert!((row_dev - 0.1).abs() < 1e-15);
        assert!((col_dev - 0.1).abs() < 1e-15);
    }
}
