//! Thick-restart Lanczos for the eigenpairs of largest magnitude of a
//! sparse symmetric matrix.
//!
//! New basis vectors are orthogonalized against the full basis (two passes
//! of Gram–Schmidt). The projected matrix QᵀAQ is formed explicitly from
//! stored products AQ, so warm-start bases that are not Krylov sequences
//! are handled by the same Rayleigh–Ritz step. Residuals are computed
//! explicitly, never estimated.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, orthogonalize, scale, Csr};

/// Components below this magnitude are skipped when fixing eigenvector signs.
pub const SIGN_EPS: f64 = 1e-10;

/// Relative norm loss under orthogonalization that signals an invariant subspace.
const BREAKDOWN: f64 = 1e-10;

/// Relative gap below which two eigenvalue magnitudes count as tied.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub k: usize,
    /// Residual tolerance relative to ‖A‖_F.
    pub tol: f64,
    /// Maximum number of Rayleigh–Ritz passes (restarts).
    pub max_restarts: usize,
    pub seed: u64,
}

impl EigenOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        EigenOptions {
            k,
            tol: 1e-8,
            max_restarts: 10 * k.max(1),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ordered by descending |λ|, then descending λ.
    pub values: Vec<f64>,
    /// One unit vector per eigenvalue.
    pub vectors: Vec<Vec<f64>>,
    /// ‖A v − λ v‖₂ per pair.
    pub residuals: Vec<f64>,
    /// Rayleigh–Ritz passes performed.
    pub passes: usize,
}

/// Flips `v` so its first component of magnitude ≥ `SIGN_EPS` is positive.
pub fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() >= SIGN_EPS) {
        if *first < 0.0 {
            scale(-1.0, v);
        }
    }
}

/// Indexes of `values` by descending magnitude. Magnitudes equal up to
/// rounding (the ±λ pairs of bipartite spectra) put the positive value first.
pub fn spectral_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| {
        let (a, b) = (values[x], values[y]);
        b.abs().total_cmp(&a.abs()).then(b.total_cmp(&a))
    });
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 1..order.len() {
        let (a, b) = (values[order[i - 1]], values[order[i]]);
        if (a.abs() - b.abs()).abs() <= TIE_EPS * top && a < b {
            order.swap(i - 1, i);
        }
    }
    order
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

struct Basis {
    q: Vec<Vec<f64>>,
    aq: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthonormalizes `v` against the basis and appends it with its image.
    /// Returns false if `v` lies (numerically) inside the current span.
    fn push(&mut self, a: &Csr, mut v: Vec<f64>) -> bool {
        let before = norm(&v);
        if before == 0.0 {
            return false;
        }
        orthogonalize(&mut v, &self.q);
        let mut after = norm(&v);
        // Heavy cancellation leaves O(eps·before) of the old span behind,
        // which is large relative to `after`; sweep again until a pass
        // removes little.
        let mut prev = before;
        for _ in 0..3 {
            if after <= BREAKDOWN * before || after >= 0.5 * prev {
                break;
            }
            prev = after;
            orthogonalize(&mut v, &self.q);
            after = norm(&v);
        }
        if after <= BREAKDOWN * before {
            return false;
        }
        scale(1.0 / after, &mut v);
        let w = a.mul_vec(&v);
        self.q.push(v);
        self.aq.push(w);
        true
    }

    fn len(&self) -> usize {
        self.q.len()
    }
}

/// Top-`k` eigenpairs of the symmetric operator `a` by magnitude.
///
/// `warm` seeds the search space with existing vectors (zero-padded or
/// truncated to the operator size). Without it a seeded random start
/// vector is used.
pub fn top_eigenpairs(a: &Csr, opts: &EigenOptions, warm: Option<&[Vec<f64>]>) -> Result<EigenPairs> {
    let n = a.rows();
    let k = opts.k;
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!("operator is {}x{}", n, a.cols())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    let norm_a = a.frobenius_norm();
    if norm_a == 0.0 {
        let vectors = (0..k)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        return Ok(EigenPairs {
            values: vec![0.0; k],
            vectors,
            residuals: vec![0.0; k],
            passes: 0,
        });
    }
    let threshold = opts.tol * norm_a;
    let max_dim = n.min((2 * k).max(k + 24));
    let keep = (k + (max_dim - k) / 2).min(max_dim.saturating_sub(1)).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis = Basis {
        q: Vec::with_capacity(max_dim + 1),
        aq: Vec::with_capacity(max_dim + 1),
    };
    let mut next: Option<Vec<f64>> = None;
    match warm {
        Some(vs) if !vs.is_empty() => {
            for v in vs.iter().take(max_dim) {
                let mut v = v.clone();
                v.resize(n, 0.0);
                basis.push(a, v);
            }
        }
        _ => next = Some(random_vector(&mut rng, n)),
    }

    let mut passes = 0;
    loop {
        // Expand to max_dim, replacing exhausted directions with random ones.
        if next.is_some() || basis.len() < k {
            let mut candidate = next.take();
            while basis.len() < max_dim {
                let v = candidate.take().unwrap_or_else(|| random_vector(&mut rng, n));
                if basis.push(a, v) {
                    candidate = Some(basis.aq.last().expect("just pushed").clone());
                } else if basis.len() == n {
                    break;
                }
            }
        }

        passes += 1;
        let dim = basis.len();
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = 0.5 * (dot(&basis.q[i], &basis.aq[j]) + dot(&basis.q[j], &basis.aq[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let order = spectral_order(eig.eigenvalues.as_slice());

        let retain = if dim >= max_dim { keep } else { dim }.max(k).min(dim);
        let mut ys = Vec::with_capacity(retain);
        let mut ays = Vec::with_capacity(retain);
        let mut thetas = Vec::with_capacity(retain);
        let mut residuals = Vec::with_capacity(k);
        let mut first_unconverged: Option<Vec<f64>> = None;
        for (rank, &c) in order.iter().take(retain).enumerate() {
            let s = eig.eigenvectors.column(c);
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for (j, &sj) in s.iter().enumerate() {
                axpy(sj, &basis.q[j], &mut y);
                axpy(sj, &basis.aq[j], &mut ay);
            }
            let theta = eig.eigenvalues[c];
            if rank < k {
                let mut r = ay.clone();
                axpy(-theta, &y, &mut r);
                let res = norm(&r);
                if res > threshold && first_unconverged.is_none() {
                    first_unconverged = Some(r);
                }
                residuals.push(res);
            }
            ys.push(y);
            ays.push(ay);
            thetas.push(theta);
        }

        if first_unconverged.is_none() {
            let mut vectors: Vec<Vec<f64>> = ys.into_iter().take(k).collect();
            vectors.iter_mut().for_each(|v| fix_sign(v));
            let residuals = vectors
                .iter()
                .zip(&thetas)
                .map(|(v, &t)| {
                    let mut r = a.mul_vec(v);
                    axpy(-t, v, &mut r);
                    norm(&r)
                })
                .collect();
            thetas.truncate(k);
            return Ok(EigenPairs {
                values: thetas,
                vectors,
                residuals,
                passes,
            });
        }
        if passes > opts.max_restarts {
            let max_residual = residuals.iter().copied().fold(0.0, f64::max);
            return Err(Error::NotConverged {
                iterations: passes,
                max_residual,
                tolerance: threshold,
                residuals,
            });
        }
        basis.q = ys;
        basis.aq = ays;
        next = first_unconverged;
    }
}
