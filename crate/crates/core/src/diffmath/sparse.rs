/// Compressed sparse row matrix, used for graph operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from the nonzero entries of a dense row-major
    /// matrix.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n_rows * n_cols);
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = dense[i * n_cols + j];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.n_rows
    }

    pub fn cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `A · X` for `X` stored row-major with `width` columns.
    pub fn mul_dense(&self, x: &[f64], width: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols * width);
        let mut out = vec![0.0; self.n_rows * width];
        for i in 0..self.n_rows {
            let orow = &mut out[i * width..(i + 1) * width];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[p];
                let xrow = &x[self.col_idx[p] * width..(self.col_idx[p] + 1) * width];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += a * xv;
                }
            }
        }
        out
    }

    /// `Aᵀ · G` for `G` stored row-major with `width` columns.
    pub fn mul_dense_transposed(&self, g: &[f64], width: usize) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.n_rows * width);
        let mut out = vec![0.0; self.n_cols * width];
        for i in 0..self.n_rows {
            let grow = &g[i * width..(i + 1) * width];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[p];
                let j = self.col_idx[p];
                for (o, &gv) in out[j * width..(j + 1) * width].iter_mut().zip(grow) {
                    *o += a * gv;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[i * self.n_cols + self.col_idx[p]] = self.values[p];
            }
        }
        out
    }
}
