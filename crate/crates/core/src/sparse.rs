//! Compressed sparse row storage for transition matrices.
//!
//! Rows are kept sorted by column and structural zeros are never stored.
//! Products prune entries whose magnitude falls below a caller-supplied
//! threshold to bound fill-in.

use thiserror::Error;

/// Entries below this magnitude are dropped from products by default.
pub const DEFAULT_PRUNE: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("entry ({row}, {col}) is not finite and non-negative: {value}")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and zeros dropped. Entries must be finite and non-negative.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, value) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(MatrixError::OutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            if !value.is_finite() || value < 0.0 {
                return Err(MatrixError::InvalidEntry { row, col, value });
            }
            entries.push((row, col, value));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (row, col, value) in entries {
            if last == Some((row, col)) {
                *values.last_mut().expect("duplicate follows an entry") += value;
                continue;
            }
            last = Some((row, col));
            col_idx.push(col);
            values.push(value);
            row_ptr[row + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        };
        m.drop_below(0.0);
        Ok(m)
    }

    /// Builds a matrix from per-row `(col, value)` lists that are already
    /// sorted by column with unique columns and positive values.
    pub(crate) fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n_cols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_sorted_rows(n_cols, vec![Vec::new(); n_rows])
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(MatrixError::Dimension("ragged dense rows".into()));
        }
        Self::from_triplets(
            rows.len(),
            n_cols,
            rows.iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v))),
        )
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored `(col, value)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row_sum(i)).collect()
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Column vector product `P x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if x.len() != self.n_cols {
            return Err(MatrixError::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok((0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect())
    }

    /// Row vector product `x P` (push-forward of a distribution).
    pub fn vec_mul(&self, x: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if x.len() != self.n_rows {
            return Err(MatrixError::Dimension(format!(
                "vector of length {} against {} rows",
                x.len(),
                self.n_rows
            )));
        }
        let mut out = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                out[j] += xi * v;
            }
        }
        Ok(out)
    }

    /// Sparse product `self * other`, dropping entries below `prune`.
    pub fn matmul(&self, other: &SparseMatrix, prune: f64) -> Result<SparseMatrix, MatrixError> {
        if self.n_cols != other.n_rows {
            return Err(MatrixError::Dimension(format!(
                "{}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut acc = vec![0.0; other.n_cols];
        let mut touched = vec![false; other.n_cols];
        let mut cols: Vec<usize> = Vec::new();
        let mut rows = Vec::with_capacity(self.n_rows);
        for i in 0..self.n_rows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            let mut row = Vec::with_capacity(cols.len());
            for &j in &cols {
                let v = acc[j];
                if v > prune {
                    row.push((j, v));
                }
                acc[j] = 0.0;
                touched[j] = false;
            }
            cols.clear();
            rows.push(row);
        }
        Ok(SparseMatrix::from_sorted_rows(other.n_cols, rows))
    }

    /// `self^e` by binary powering.
    pub fn pow(&self, e: u32, prune: f64) -> Result<SparseMatrix, MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::Dimension("power of a non-square matrix".into()));
        }
        let mut result = SparseMatrix::identity(self.n_rows);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.matmul(&base, prune)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.matmul(&base, prune)?;
            }
        }
        Ok(result)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut rows = vec![Vec::new(); self.n_cols];
        for (i, j, v) in self.triplets() {
            rows[j].push((i, v));
        }
        SparseMatrix::from_sorted_rows(self.n_rows, rows)
    }

    /// Principal submatrix on `states`, re-indexed in the given order.
    pub fn principal_submatrix(&self, states: &[usize]) -> SparseMatrix {
        let mut position = vec![usize::MAX; self.n_cols];
        for (k, &s) in states.iter().enumerate() {
            position[s] = k;
        }
        let rows = states
            .iter()
            .map(|&s| {
                let mut row: Vec<(usize, f64)> = self
                    .row(s)
                    .filter_map(|(j, v)| (position[j] != usize::MAX).then(|| (position[j], v)))
                    .collect();
                row.sort_unstable_by_key(|e| e.0);
                row
            })
            .collect();
        SparseMatrix::from_sorted_rows(states.len(), rows)
    }

    /// Block with the given row range and column range.
    pub fn block(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> SparseMatrix {
        let out = rows
            .map(|i| {
                self.row(i)
                    .filter(|(j, _)| cols.contains(j))
                    .map(|(j, v)| (j - cols.start, v))
                    .collect()
            })
            .collect();
        SparseMatrix::from_sorted_rows(cols.len(), out)
    }

    fn drop_below(&mut self, threshold: f64) {
        if self.values.iter().all(|&v| v > threshold) {
            return;
        }
        let rows = (0..self.n_rows)
            .map(|i| self.row(i).filter(|&(_, v)| v > threshold).collect())
            .collect();
        *self = SparseMatrix::from_sorted_rows(self.n_cols, rows);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let m = b[0].len();
        let mut c = vec![vec![0.0; m]; n];
        for i in 0..n {
            for k in 0..b.len() {
                for j in 0..m {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 1, 0.25), (0, 1, 0.25), (1, 0, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.row_len(1), 0);
    }

    #[test]
    fn rejects_negative_and_out_of_range() {
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, [(0, 0, -0.1)]),
            Err(MatrixError::InvalidEntry { .. })
        ));
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, [(2, 0, 0.1)]),
            Err(MatrixError::OutOfRange { .. })
        ));
    }

    #[test]
    fn products_match_dense() {
        let a = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.1, 0.0, 0.9],
            vec![0.0, 0.3, 0.6],
        ];
        let sa = SparseMatrix::from_dense(&a).unwrap();
        let prod = sa.matmul(&sa, 0.0).unwrap().to_dense();
        let expect = dense_mul(&a, &a);
        for i in 0..3 {
            for j in 0..3 {
                assert!((prod[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        let cube = sa.pow(3, 0.0).unwrap().to_dense();
        let expect3 = dense_mul(&expect, &a);
        for i in 0..3 {
            for j in 0..3 {
                assert!((cube[i][j] - expect3[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn left_and_right_products() {
        let m = SparseMatrix::from_dense(&[vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        assert_eq!(m.vec_mul(&[1.0, 0.0]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(m.mul_vec(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert!(m.vec_mul(&[1.0]).is_err());
    }

    #[test]
    fn submatrix_and_block() {
        let m = SparseMatrix::from_dense(&[
            vec![0.1, 0.2, 0.3],
            vec![0.4, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let sub = m.principal_submatrix(&[2, 0]);
        assert_eq!(sub.to_dense(), vec![vec![1.0, 0.0], vec![0.3, 0.1]]);
        let blk = m.block(0..2, 1..3);
        assert_eq!(blk.to_dense(), vec![vec![0.2, 0.3], vec![0.5, 0.0]]);
        assert_eq!(m.transpose().get(2, 0), 0.3);
    }

    #[test]
    fn pruning_drops_tiny_products() {
        let m = SparseMatrix::from_dense(&[vec![1e-9, 1.0], vec![0.0, 1.0]]).unwrap();
        let sq = m.matmul(&m, 1e-15).unwrap();
        assert_eq!(sq.get(0, 0), 0.0);
        assert_eq!(sq.row_len(0), 1);
    }
}
