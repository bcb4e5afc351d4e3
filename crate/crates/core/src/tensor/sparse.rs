use super::DenseMatrix;

/// Fixed (non-learnable) sparse operator stored as compressed rows.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_row_lists(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &rows {
            for &(c, v) in row {
                assert!(c < cols, "column {c} out of range {cols}");
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `self · dense`; caller guarantees `dense.rows() == self.cols()`.
    pub fn mul_dense(&self, dense: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(dense.rows(), self.cols);
        let d = dense.cols();
        let mut out = DenseMatrix::zeros(self.rows, d);
        for r in 0..self.rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let out_row = out.row_mut(r);
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        out
    }

    /// `selfᵀ · dense`; caller guarantees `dense.rows() == self.rows()`.
    pub fn transpose_mul_dense(&self, dense: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(dense.rows(), self.rows);
        let d = dense.cols();
        let mut out = DenseMatrix::zeros(self.cols, d);
        for r in 0..self.rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let g = dense.row(r);
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(g) {
                    *o += v * x;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let cur = out.get(r, c);
                out.set(r, c, cur + v);
            }
        }
        out
    }
}
