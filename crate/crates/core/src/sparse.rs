//! Compressed sparse row matrices and their products with dense blocks.

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Columns within a row must
    /// be strictly increasing.
    pub fn from_rows(ncols: usize, rows: impl IntoIterator<Item = Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            for (k, &(j, v)) in row.iter().enumerate() {
                assert!(j < ncols, "column {j} out of range");
                assert!(k == 0 || row[k - 1].0 < j, "columns must increase within a row");
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Keeps the non-zero entries of `dense`.
    pub fn from_dense(dense: &Array2<f64>) -> Self {
        Self::from_rows(
            dense.ncols(),
            dense.rows().into_iter().map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            }),
        )
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored values in row-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same sparsity pattern with the stored values multiplied entrywise.
    pub fn scale_entries(&self, factors: &[f64]) -> Self {
        assert_eq!(factors.len(), self.nnz(), "one factor per stored entry");
        Self {
            values: self.values.iter().zip(factors).map(|(v, f)| v * f).collect(),
            ..self.clone()
        }
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.nrows(), self.ncols));
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                dense[[i, j]] = v;
            }
        }
        dense
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(rhs.nrows(), self.ncols, "sparse matmul shape mismatch");
        let mut out = Array2::zeros((self.nrows(), rhs.ncols()));
        for (i, mut out_row) in out.outer_iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &rhs.row(j));
            }
        }
        out
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(rhs.nrows(), self.nrows(), "sparse matmul shape mismatch");
        let mut out = Array2::zeros((self.ncols, rhs.ncols()));
        for i in 0..self.nrows() {
            let r = rhs.row(i);
            for (j, v) in self.row(i) {
                out.row_mut(j).scaled_add(v, &r);
            }
        }
        out
    }
}
