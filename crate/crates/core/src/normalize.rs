//! Per-relationship additive normalization and spectral scaling.
//!
//! Each stored entry a_ij becomes (a_ij - ã_ij) / s, where ã_ij is a mean
//! baseline and s a spectral-norm estimate of the centered matrix. Absent
//! entries stay absent; entries equal to the baseline stay stored as 0.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{SparseMatrix, WeightRange};

const POWER_ITERATIONS: usize = 30;
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdditiveMode {
    None,
    GlobalMean,
    RowMean,
    ColMean,
    RowCol,
}

impl AdditiveMode {
    pub const ALL: [AdditiveMode; 5] = [
        AdditiveMode::None,
        AdditiveMode::GlobalMean,
        AdditiveMode::RowMean,
        AdditiveMode::ColMean,
        AdditiveMode::RowCol,
    ];

    /// Mode used when no override is configured.
    pub fn default_for(range: WeightRange) -> AdditiveMode {
        match range {
            WeightRange::Weighted => AdditiveMode::GlobalMean,
            WeightRange::Unweighted | WeightRange::Positive | WeightRange::Signed => AdditiveMode::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdditiveMode::None => "none",
            AdditiveMode::GlobalMean => "global_mean",
            AdditiveMode::RowMean => "row_mean",
            AdditiveMode::ColMean => "col_mean",
            AdditiveMode::RowCol => "row_col",
        }
    }
}

impl fmt::Display for AdditiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdditiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdditiveMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown normalization mode `{s}`")))
    }
}

/// Fitted normalization of one relationship's adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams {
    pub rel: String,
    pub mode: AdditiveMode,
    pub global_mean: f64,
    /// Mean of stored entries per row; rows without entries hold the global mean.
    pub row_means: Vec<f64>,
    pub col_means: Vec<f64>,
    pub scale: f64,
}

impl NormalizationParams {
    pub fn identity(rel: &str, rows: usize, cols: usize) -> Self {
        NormalizationParams {
            rel: rel.to_string(),
            mode: AdditiveMode::None,
            global_mean: 0.0,
            row_means: vec![0.0; rows],
            col_means: vec![0.0; cols],
            scale: 1.0,
        }
    }

    /// Fits `mode`; every mode except `none` also divides by a spectral-norm
    /// estimate of the centered matrix.
    pub fn fit(rel: &str, matrix: &SparseMatrix, mode: AdditiveMode) -> Result<Self> {
        Self::fit_with(rel, matrix, mode, mode != AdditiveMode::None)
    }

    pub fn fit_with(rel: &str, matrix: &SparseMatrix, mode: AdditiveMode, scaled: bool) -> Result<Self> {
        let mut params = Self::identity(rel, matrix.rows(), matrix.cols());
        params.mode = mode;
        if mode != AdditiveMode::None {
            if matrix.nnz() == 0 {
                return Err(Error::EmptyMatrix(mode.as_str()));
            }
            let n = matrix.nnz() as f64;
            params.global_mean = matrix.triples().iter().map(|t| t.2).sum::<f64>() / n;
            let mut row_sum = vec![0.0; matrix.rows()];
            let mut row_cnt = vec![0usize; matrix.rows()];
            let mut col_sum = vec![0.0; matrix.cols()];
            let mut col_cnt = vec![0usize; matrix.cols()];
            for &(i, j, v) in matrix.triples() {
                row_sum[i] += v;
                row_cnt[i] += 1;
                col_sum[j] += v;
                col_cnt[j] += 1;
            }
            let mean = |s: f64, c: usize| if c == 0 { params.global_mean } else { s / c as f64 };
            params.row_means = row_sum.iter().zip(&row_cnt).map(|(&s, &c)| mean(s, c)).collect();
            params.col_means = col_sum.iter().zip(&col_cnt).map(|(&s, &c)| mean(s, c)).collect();
        }
        if scaled && matrix.nnz() > 0 {
            let centered = matrix.map_values(|i, j, v| v - params.baseline(i, j));
            params.scale = spectral_norm_estimate(&centered).max(SCALE_FLOOR);
        }
        Ok(params)
    }

    /// The additive baseline ã for cell (row, col).
    pub fn baseline(&self, row: usize, col: usize) -> f64 {
        match self.mode {
            AdditiveMode::None => 0.0,
            AdditiveMode::GlobalMean => self.global_mean,
            AdditiveMode::RowMean => self.row_means[row],
            AdditiveMode::ColMean => self.col_means[col],
            AdditiveMode::RowCol => {
                self.global_mean
                    + (self.row_means[row] - self.global_mean)
                    + (self.col_means[col] - self.global_mean)
            }
        }
    }

    pub fn apply(&self, matrix: &SparseMatrix) -> Result<SparseMatrix> {
        if matrix.rows() != self.row_means.len() || matrix.cols() != self.col_means.len() {
            return Err(Error::DimensionMismatch(format!(
                "normalization for `{}` fitted on {}x{}, applied to {}x{}",
                self.rel,
                self.row_means.len(),
                self.col_means.len(),
                matrix.rows(),
                matrix.cols()
            )));
        }
        if self.mode == AdditiveMode::None && self.scale == 1.0 {
            return Ok(matrix.clone());
        }
        Ok(matrix.map_values(|i, j, v| (v - self.baseline(i, j)) / self.scale))
    }

    /// Maps a normalized-scale value at (row, col) back to the original scale.
    pub fn denormalize(&self, score: f64, row: usize, col: usize) -> f64 {
        score * self.scale + self.baseline(row, col)
    }

    pub fn rows(&self) -> usize {
        self.row_means.len()
    }

    pub fn cols(&self) -> usize {
        self.col_means.len()
    }
}

/// Largest singular value by power iteration on MᵀM.
///
/// Deterministic start vector; the estimate is a lower bound that is tight
/// once the iteration has converged.
pub fn spectral_norm_estimate(m: &SparseMatrix) -> f64 {
    if m.nnz() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..m.cols()).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let nx = norm(&x);
        if nx == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = m.mul_vec(&x);
        sigma = norm(&y);
        x = m.tr_mul_vec(&y);
    }
    sigma
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
