//! Dense vector kernels and a CSR operator for symmetric matrix–vector products.

use rayon::prelude::*;

use crate::graph::SparseMatrix;

/// Rows per rayon task; below this the product runs serially.
const PAR_MIN_ROWS: usize = 4096;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Classical Gram–Schmidt, applied twice, against an orthonormal basis.
pub fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, v)).collect();
        for (c, q) in coeffs.iter().zip(basis) {
            axpy(-c, q, v);
        }
    }
}

/// Compressed sparse rows; each row is summed sequentially, so products are
/// bitwise reproducible regardless of thread count.
#[derive(Debug, Clone)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn from_sparse(m: &SparseMatrix) -> Self {
        let mut row_ptr = vec![0usize; m.rows() + 1];
        for &(i, _, _) in m.triples() {
            row_ptr[i + 1] += 1;
        }
        for i in 0..m.rows() {
            row_ptr[i + 1] += row_ptr[i];
        }
        // triples are sorted by (row, col)
        Csr {
            n_rows: m.rows(),
            n_cols: m.cols(),
            row_ptr,
            col_idx: m.triples().iter().map(|t| t.1).collect(),
            values: m.triples().iter().map(|t| t.2).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.n_rows
    }

    pub fn cols(&self) -> usize {
        self.n_cols
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        if self.n_rows >= PAR_MIN_ROWS {
            (0..self.n_rows).into_par_iter().map(|i| self.row_dot(i, x)).collect()
        } else {
            (0..self.n_rows).map(|i| self.row_dot(i, x)).collect()
        }
    }
}
