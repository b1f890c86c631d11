//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's numerical code paths: the dense
//! eigensolver is a cyclic Jacobi implementation and the top-k oracle is a
//! full sort.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semrec::aggregate::{EntityLayout, UnifiedMatrix};
use semrec::graph::SparseMatrix;

/// Eigenvalues and eigenvectors (columns) of a dense symmetric matrix by
/// cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| m[i][i]).collect();
    let columns = (0..n).map(|c| (0..n).map(|r| v[r][c]).collect()).collect();
    (values, columns)
}

/// Eigenpairs sorted by descending |λ| (ties: larger λ first).
pub fn sorted_by_magnitude(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (vals, vecs) = jacobi_eigen(a);
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&x, &y| {
        vals[y].abs().partial_cmp(&vals[x].abs()).unwrap().then(vals[y].partial_cmp(&vals[x]).unwrap())
    });
    (idx.iter().map(|&i| vals[i]).collect(), idx.iter().map(|&i| vecs[i].clone()).collect())
}

pub fn dense(m: &SparseMatrix) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; m.cols()]; m.rows()];
    for &(i, j, v) in m.triples() {
        d[i][j] += v;
    }
    d
}

/// Random symmetric matrix with zero diagonal and roughly `density` of
/// off-diagonal cells filled with N(0,1)-ish values.
pub fn random_symmetric(n: usize, density: f64, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < density {
                let v: f64 = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
    }
    SparseMatrix::from_triples(n, n, t).unwrap()
}

/// Same as `random_symmetric` but samples edges without scanning all pairs.
pub fn random_sparse_symmetric(n: usize, density: f64, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = ((n * (n - 1) / 2) as f64 * density).round() as usize;
    let mut t = Vec::with_capacity(2 * pairs);
    let mut seen = std::collections::HashSet::new();
    while seen.len() < pairs {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        let v: f64 = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
        t.push((i, j, v));
        t.push((j, i, v));
    }
    SparseMatrix::from_triples(n, n, t).unwrap()
}

pub fn unified(m: SparseMatrix) -> UnifiedMatrix {
    let ids = (0..m.rows()).map(|i| format!("n{i}")).collect();
    UnifiedMatrix {
        layout: EntityLayout::from_blocks(vec![("node".into(), ids)]),
        matrix: m,
    }
}

/// Dense ‖A − Σ_{i<k} λ_i v_i v_iᵀ‖_F.
pub fn dense_truncation_error(a: &[Vec<f64>], vals: &[f64], vecs: &[Vec<f64>], k: usize) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p: f64 = (0..k).map(|c| vals[c] * vecs[c][i] * vecs[c][j]).sum();
            acc += (a[i][j] - p).powi(2);
        }
    }
    acc.sqrt()
}

/// Exact top-k by full sort: score descending, index ascending.
pub fn sort_topk(scores: &[(usize, f64)], k: usize) -> Vec<(usize, f64)> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    s.truncate(k);
    s
}

/// Principal angles (radians) between the spans of two orthonormal sets.
pub fn principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let k = a.len();
    let m = nalgebra::DMatrix::from_fn(k, b.len(), |i, j| a[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>());
    m.svd(false, false)
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect()
}

pub fn random_unit_vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d)
                .map(|_| {
                    // Box–Muller
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}
