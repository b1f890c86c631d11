//! Truncated spectral model of the unified matrix and its spectral kernels.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::aggregate::{EntityLayout, UnifiedMatrix};
use crate::eigen::{top_eigenpairs, EigenOptions};
use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::normalize::{AdditiveMode, NormalizationParams};
use crate::num::{fmt_f64, parse_f64};

const MODEL_MAGIC: &str = "semrec-model\t1";
const MAX_POLY_DEGREE: usize = 8;

/// Spectral transformation f applied to the eigenvalues at scoring time.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Kernel {
    /// f(λ) = λ
    #[default]
    Truncated,
    /// f(λ) = exp(αλ)
    Exponential { alpha: f64 },
    /// f(λ) = 1 / (1 − αλ)
    VonNeumann { alpha: f64 },
    /// f(λ) = Σ c_p λ^p
    Polynomial { coeffs: Vec<f64> },
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Truncated => "truncated",
            Kernel::Exponential { .. } => "exponential",
            Kernel::VonNeumann { .. } => "von_neumann",
            Kernel::Polynomial { .. } => "polynomial",
        }
    }

    /// Builds a kernel from its name and parameters (`alpha`, or the
    /// polynomial coefficients c_0, c_1, …).
    pub fn from_parts(name: &str, alpha: Option<f64>, coeffs: &[f64]) -> Result<Kernel> {
        let need_alpha = || alpha.ok_or_else(|| Error::InvalidArgument(format!("kernel `{name}` needs alpha")));
        let k = match name {
            "truncated" => Kernel::Truncated,
            "exponential" => Kernel::Exponential { alpha: need_alpha()? },
            "von_neumann" => Kernel::VonNeumann { alpha: need_alpha()? },
            "polynomial" => Kernel::Polynomial {
                coeffs: coeffs.to_vec(),
            },
            other => return Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        };
        k.check_params()?;
        Ok(k)
    }

    fn check_params(&self) -> Result<()> {
        match self {
            Kernel::Exponential { alpha } | Kernel::VonNeumann { alpha } if !alpha.is_finite() => {
                Err(Error::InvalidArgument("kernel alpha must be finite".into()))
            }
            Kernel::Polynomial { coeffs } if coeffs.is_empty() || coeffs.len() > MAX_POLY_DEGREE + 1 => {
                Err(Error::InvalidArgument(format!(
                    "polynomial kernel needs 1..={} coefficients",
                    MAX_POLY_DEGREE + 1
                )))
            }
            Kernel::Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                Err(Error::InvalidArgument("polynomial coefficients must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Checks the kernel is defined on the given spectrum.
    pub fn validate(&self, spectrum: &[f64]) -> Result<()> {
        self.check_params()?;
        if let Kernel::VonNeumann { alpha } = self {
            let worst = spectrum.iter().map(|l| (alpha * l).abs()).fold(0.0, f64::max);
            if worst >= 1.0 {
                return Err(Error::KernelPole(worst));
            }
        }
        Ok(())
    }

    pub fn apply(&self, lambda: f64) -> f64 {
        match self {
            Kernel::Truncated => lambda,
            Kernel::Exponential { alpha } => (alpha * lambda).exp(),
            Kernel::VonNeumann { alpha } => 1.0 / (1.0 - alpha * lambda),
            Kernel::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * lambda + c),
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Kernel::Truncated => vec![],
            Kernel::Exponential { alpha } | Kernel::VonNeumann { alpha } => vec![*alpha],
            Kernel::Polynomial { coeffs } => coeffs.clone(),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for p in self.params() {
            write!(f, "\t{}", fmt_f64(p))?;
        }
        Ok(())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('\t');
        let name = parts.next().unwrap_or("");
        let params = parts
            .map(|p| parse_f64(p).ok_or_else(|| Error::InvalidArgument(format!("invalid kernel parameter `{p}`"))))
            .collect::<Result<Vec<_>>>()?;
        Kernel::from_parts(name, params.first().copied(), &params)
    }
}

/// How one relationship entered the unified matrix; used to map scores back
/// to the relationship's original weight scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationInfo {
    pub name: String,
    pub row_type: String,
    pub col_type: String,
    pub weight: f64,
    pub normalization: NormalizationParams,
}

/// Per-entity latent vectors and the retained spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    eigenvalues: Vec<f64>,
    /// Row-major N×k.
    vectors: Vec<f64>,
    kernel: Kernel,
    layout: EntityLayout,
    relations: Vec<RelationInfo>,
}

impl LatentModel {
    /// Top-k eigendecomposition of the unified matrix.
    pub fn decompose(a: &UnifiedMatrix, opts: &EigenOptions) -> Result<LatentModel> {
        let csr = Csr::from_sparse(&a.matrix);
        let pairs = top_eigenpairs(&csr, opts, None)?;
        Ok(Self::from_columns(pairs.values, &pairs.vectors, a.layout.clone()))
    }

    /// Recomputes the model for a changed matrix, starting from the current
    /// vectors. Entities may have been added; existing ones keep their
    /// position within their type.
    pub fn update(&self, a: &UnifiedMatrix, opts: &EigenOptions) -> Result<LatentModel> {
        if !self.layout.is_extended_by(&a.layout) {
            return Err(Error::DimensionMismatch(
                "updated matrix does not extend the model's entity layout".into(),
            ));
        }
        let n = a.dim();
        let k = self.k();
        let mut warm = vec![vec![0.0; n]; k];
        for (old, new) in self.layout.blocks().iter().zip(a.layout.blocks()) {
            for i in 0..old.ids.len() {
                let row = self.row(old.offset + i);
                for (c, &x) in row.iter().enumerate() {
                    warm[c][new.offset + i] = x;
                }
            }
        }
        let csr = Csr::from_sparse(&a.matrix);
        let pairs = top_eigenpairs(&csr, opts, Some(&warm))?;
        let mut model = Self::from_columns(pairs.values, &pairs.vectors, a.layout.clone());
        model.kernel = self.kernel.clone();
        model.relations = self.relations.clone();
        Ok(model)
    }

    pub fn from_columns(eigenvalues: Vec<f64>, columns: &[Vec<f64>], layout: EntityLayout) -> LatentModel {
        let k = eigenvalues.len();
        let n = layout.len();
        let mut vectors = vec![0.0; n * k];
        for (c, col) in columns.iter().enumerate() {
            for (r, &x) in col.iter().enumerate() {
                vectors[r * k + c] = x;
            }
        }
        LatentModel {
            eigenvalues,
            vectors,
            kernel: Kernel::Truncated,
            layout,
            relations: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.layout.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn layout(&self) -> &EntityLayout {
        &self.layout
    }

    pub fn relations(&self) -> &[RelationInfo] {
        &self.relations
    }

    pub fn set_relations(&mut self, relations: Vec<RelationInfo>) {
        self.relations = relations;
    }

    /// Latent vector of a global row.
    pub fn row(&self, row: usize) -> &[f64] {
        let k = self.k();
        &self.vectors[row * k..(row + 1) * k]
    }

    /// Eigenvector `c` as a column.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n()).map(|r| self.row(r)[c]).collect()
    }

    /// Same vectors with a different kernel.
    pub fn with_kernel(&self, kernel: Kernel) -> Result<LatentModel> {
        kernel.validate(&self.eigenvalues)?;
        let mut m = self.clone();
        m.kernel = kernel;
        Ok(m)
    }

    /// f(λ_i) for every retained eigenvalue.
    pub fn transformed_spectrum(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| self.kernel.apply(l)).collect()
    }

    /// Score of a row pair: Σ f(λ_i) v_i[a] v_i[b].
    pub fn score_rows(&self, a: usize, b: usize) -> f64 {
        let (va, vb) = (self.row(a), self.row(b));
        self.eigenvalues
            .iter()
            .zip(va.iter().zip(vb))
            .map(|(&l, (x, y))| self.kernel.apply(l) * x * y)
            .sum()
    }

    pub fn predict(&self, a: (&str, &str), b: (&str, &str)) -> Result<f64> {
        let ra = self.layout.row_of(a.0, a.1)?;
        let rb = self.layout.row_of(b.0, b.1)?;
        Ok(self.score_rows(ra, rb))
    }

    /// Prediction mapped back to the original weight scale of `rel`.
    pub fn predict_denormalized(&self, a: (&str, &str), b: (&str, &str), rel: &str) -> Result<f64> {
        let score = self.predict(a, b)?;
        let info = self
            .relations
            .iter()
            .find(|r| r.name == rel)
            .ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        let (row, col) = if info.row_type == a.0 && info.col_type == b.0 {
            (a.1, b.1)
        } else if info.row_type == b.0 && info.col_type == a.0 {
            (b.1, a.1)
        } else {
            return Err(Error::InvalidArgument(format!(
                "relation `{rel}` does not connect `{}` and `{}`",
                a.0, b.0
            )));
        };
        let local = |t: &str, id: &str| -> Result<usize> {
            let block = self.layout.block(t)?;
            Ok(self.layout.row_of(t, id)? - block.offset)
        };
        let (i, j) = (local(&info.row_type, row)?, local(&info.col_type, col)?);
        let unweighted = if info.weight > 0.0 { score / info.weight } else { 0.0 };
        Ok(info.normalization.denormalize(unweighted, i, j))
    }

    /// Frobenius norm of A − V f(Λ) Vᵀ over all cells, streamed one row at a time.
    pub fn reconstruction_error(&self, a: &UnifiedMatrix) -> Result<f64> {
        self.check_dims(a)?;
        let csr = Csr::from_sparse(&a.matrix);
        let f = self.transformed_spectrum();
        let n = self.n();
        let row_errors: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let vi: Vec<f64> = self.row(i).iter().zip(&f).map(|(x, l)| x * l).collect();
                let mut stored = csr.row(i).peekable();
                let mut acc = 0.0;
                for j in 0..n {
                    let p: f64 = vi.iter().zip(self.row(j)).map(|(x, y)| x * y).sum();
                    let aij = match stored.peek() {
                        Some(&(c, v)) if c == j => {
                            stored.next();
                            v
                        }
                        _ => 0.0,
                    };
                    acc += (aij - p) * (aij - p);
                }
                acc
            })
            .collect();
        Ok(row_errors.iter().sum::<f64>().sqrt())
    }

    /// Frobenius error restricted to the stored entries of A.
    pub fn stored_entry_error(&self, a: &UnifiedMatrix) -> Result<f64> {
        self.check_dims(a)?;
        Ok(a.matrix
            .triples()
            .iter()
            .map(|&(i, j, v)| {
                let d = v - self.score_rows(i, j);
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }

    fn check_dims(&self, a: &UnifiedMatrix) -> Result<()> {
        if a.dim() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} rows, matrix {}",
                self.n(),
                a.dim()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |xs: &[f64]| xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join("\t");
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let _ = writeln!(out, "k\t{}", self.k());
        let _ = writeln!(out, "n\t{}", self.n());
        let _ = writeln!(out, "kernel\t{}", self.kernel);
        let _ = writeln!(out, "blocks\t{}", self.layout.blocks().len());
        for b in self.layout.blocks() {
            let _ = writeln!(out, "block\t{}\t{}\t{}", b.name, b.offset, b.ids.len());
            let _ = writeln!(out, "ids\t{}", b.ids.join("\t"));
        }
        let _ = writeln!(out, "relations\t{}", self.relations.len());
        for r in &self.relations {
            let p = &r.normalization;
            let _ = writeln!(
                out,
                "relation\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.name,
                r.row_type,
                r.col_type,
                fmt_f64(r.weight),
                p.mode,
                fmt_f64(p.global_mean),
                fmt_f64(p.scale),
                p.rows(),
                p.cols()
            );
            let _ = writeln!(out, "row_means\t{}", join(&p.row_means));
            let _ = writeln!(out, "col_means\t{}", join(&p.col_means));
        }
        let _ = writeln!(out, "eigenvalues\t{}", join(&self.eigenvalues));
        for r in 0..self.n() {
            let _ = writeln!(out, "{}", join(self.row(r)));
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<LatentModel> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, format!("unexpected end of file, expected {what}")))?;
            Ok((no, line.split('\t').collect()))
        };
        let bad = |no: usize, msg: String| Error::parse(origin, no, msg);
        let num = |no: usize, s: &str| parse_f64(s).ok_or_else(|| bad(no, format!("invalid number `{s}`")));
        let int = |no: usize, s: &str| s.parse::<usize>().map_err(|_| bad(no, format!("invalid count `{s}`")));
        let keyed = |no: usize, cols: &[&str], key: &str| -> Result<()> {
            if cols.first() != Some(&key) {
                return Err(bad(no, format!("expected `{key}`")));
            }
            Ok(())
        };

        let (no, head) = next("header")?;
        if head.join("\t") != MODEL_MAGIC {
            return Err(bad(no, "not a semrec model file".into()));
        }
        let (no, c) = next("k")?;
        keyed(no, &c, "k")?;
        let k = int(no, c.get(1).copied().unwrap_or(""))?;
        let (no, c) = next("n")?;
        keyed(no, &c, "n")?;
        let n = int(no, c.get(1).copied().unwrap_or(""))?;
        let (no, c) = next("kernel")?;
        keyed(no, &c, "kernel")?;
        let kernel: Kernel = c[1..].join("\t").parse().map_err(|e: Error| bad(no, e.to_string()))?;
        let (no, c) = next("blocks")?;
        keyed(no, &c, "blocks")?;
        let nblocks = int(no, c.get(1).copied().unwrap_or(""))?;
        let mut blocks = Vec::with_capacity(nblocks);
        for _ in 0..nblocks {
            let (no, c) = next("block")?;
            keyed(no, &c, "block")?;
            if c.len() != 4 {
                return Err(bad(no, "block needs name, offset and count".into()));
            }
            let count = int(no, c[3])?;
            let (no2, ids) = next("ids")?;
            keyed(no2, &ids, "ids")?;
            let ids: Vec<String> = if count == 0 { vec![] } else { ids[1..].iter().map(|s| s.to_string()).collect() };
            if ids.len() != count {
                return Err(bad(no2, format!("expected {count} ids, found {}", ids.len())));
            }
            blocks.push((c[1].to_string(), ids));
        }
        let layout = EntityLayout::from_blocks(blocks);
        if layout.len() != n {
            return Err(bad(no, format!("blocks cover {} rows, header says {n}", layout.len())));
        }
        let (no, c) = next("relations")?;
        keyed(no, &c, "relations")?;
        let nrel = int(no, c.get(1).copied().unwrap_or(""))?;
        let mut relations = Vec::with_capacity(nrel);
        for _ in 0..nrel {
            let (no, c) = next("relation")?;
            keyed(no, &c, "relation")?;
            if c.len() != 10 {
                return Err(bad(no, "malformed relation line".into()));
            }
            let mode: AdditiveMode = c[5].parse().map_err(|e: Error| bad(no, e.to_string()))?;
            let (rows, cols) = (int(no, c[8])?, int(no, c[9])?);
            let mut means = |key: &str, len: usize| -> Result<Vec<f64>> {
                let (no, c) = next(key)?;
                keyed(no, &c, key)?;
                let vals = c[1..].iter().filter(|s| !s.is_empty()).map(|s| num(no, s)).collect::<Result<Vec<_>>>()?;
                if vals.len() != len {
                    return Err(bad(no, format!("expected {len} values in {key}")));
                }
                Ok(vals)
            };
            let row_means = means("row_means", rows)?;
            let col_means = means("col_means", cols)?;
            relations.push(RelationInfo {
                name: c[1].to_string(),
                row_type: c[2].to_string(),
                col_type: c[3].to_string(),
                weight: num(no, c[4])?,
                normalization: NormalizationParams {
                    rel: c[1].to_string(),
                    mode,
                    global_mean: num(no, c[6])?,
                    row_means,
                    col_means,
                    scale: num(no, c[7])?,
                },
            });
        }
        let (no, c) = next("eigenvalues")?;
        keyed(no, &c, "eigenvalues")?;
        let eigenvalues = c[1..].iter().map(|s| num(no, s)).collect::<Result<Vec<_>>>()?;
        if eigenvalues.len() != k {
            return Err(bad(no, format!("expected {k} eigenvalues")));
        }
        let mut vectors = Vec::with_capacity(n * k);
        for _ in 0..n {
            let (no, c) = next("vector row")?;
            if c.len() != k {
                return Err(bad(no, format!("expected {k} values")));
            }
            for s in c {
                vectors.push(num(no, s)?);
            }
        }
        kernel.validate(&eigenvalues).map_err(|e| Error::parse(origin, 4, e.to_string()))?;
        Ok(LatentModel {
            eigenvalues,
            vectors,
            kernel,
            layout,
            relations,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LatentModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// SHA-256 of the serialized model.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
