use crate::error::{Error, Result};

/// Coordinate-format sparse matrix with sorted, unique (row, col) entries.
///
/// Stored zeros are allowed: normalization keeps observed cells whose value
/// equals the baseline. Construction from raw triples drops zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    triples: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            triples: Vec::new(),
        }
    }

    /// Builds a matrix from triples; duplicate cells are summed and zero
    /// values dropped.
    pub fn from_triples(rows: usize, cols: usize, triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut m = Self::with_pattern(rows, cols, triples)?;
        m.triples.retain(|t| t.2 != 0.0);
        Ok(m)
    }

    /// Like `from_triples` but keeps explicit zeros in the pattern.
    pub fn with_pattern(rows: usize, cols: usize, mut triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &triples {
            if i >= rows || j >= cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite entry at ({i}, {j})")));
            }
        }
        triples.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triples.len());
        for t in triples {
            match merged.last_mut() {
                Some(last) if last.0 == t.0 && last.1 == t.1 => last.2 += t.2,
                _ => merged.push(t),
            }
        }
        Ok(SparseMatrix {
            rows,
            cols,
            triples: merged,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[(usize, usize, f64)] {
        &self.triples
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.triples
            .binary_search_by(|t| (t.0, t.1).cmp(&(row, col)))
            .ok()
            .map(|i| self.triples[i].2)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triples: Vec<_> = self.triples.iter().map(|&(i, j, v)| (j, i, v)).collect();
        triples.sort_by_key(|t| (t.0, t.1));
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            triples,
        }
    }

    /// Same pattern, values replaced by `f(row, col, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SparseMatrix {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            triples: self.triples.iter().map(|&(i, j, v)| (i, j, f(i, j, v))).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.triples.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && self
                .triples
                .iter()
                .all(|&(i, j, v)| self.get(j, i).map(|w| w.to_bits()) == Some(v.to_bits()))
    }

    /// y = M x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(i, j, v) in &self.triples {
            y[i] += v * x[j];
        }
        y
    }

    /// y = Mᵀ x
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        for &(i, j, v) in &self.triples {
            y[j] += v * x[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = SparseMatrix::from_triples(2, 2, vec![(1, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (0, 0, 0.0)])
            .unwrap();
        assert_eq!(m.triples(), [(0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(m.get(1, 0), Some(3.0));
        assert_eq!(m.get(0, 0), None);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(SparseMatrix::from_triples(1, 1, vec![(1, 0, 1.0)]).is_err());
    }

    #[test]
    fn products() {
        let m = SparseMatrix::from_triples(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), [3.0, 3.0]);
        assert_eq!(m.tr_mul_vec(&[1.0, 2.0]), [1.0, 6.0, 2.0]);
        assert_eq!(m.transpose().transpose(), m);
    }
}
