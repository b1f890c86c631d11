//! Dataset → latent model: reduction, normalization, assembly, decomposition.

use std::collections::BTreeMap;

use log::{debug, warn};

use crate::aggregate::{assemble, base_relation, reduce_hyperedges, Reduction, RelationshipWeights, UnifiedMatrix};
use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::graph::SemanticDataset;
use crate::model::{Kernel, LatentModel, RelationInfo};
use crate::normalize::{AdditiveMode, NormalizationParams};

pub const DEFAULT_K: usize = 32;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub k: usize,
    pub tol: f64,
    /// Restart limit; `None` means 10·k.
    pub max_restarts: Option<usize>,
    pub seed: u64,
    pub reduction: Reduction,
    pub weights: RelationshipWeights,
    /// Per-relationship normalization overrides, keyed by relation or base
    /// relation name.
    pub normalization: BTreeMap<String, AdditiveMode>,
    pub kernel: Kernel,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            k: DEFAULT_K,
            tol: DEFAULT_TOL,
            max_restarts: None,
            seed: 0,
            reduction: Reduction::Star,
            weights: RelationshipWeights::new(),
            normalization: BTreeMap::new(),
            kernel: Kernel::Truncated,
        }
    }
}

impl BuildOptions {
    pub fn eigen_options(&self, n: usize) -> EigenOptions {
        let k = self.k.min(n).max(1);
        EigenOptions {
            k,
            tol: self.tol,
            max_restarts: self.max_restarts.unwrap_or(10 * k),
            seed: self.seed,
        }
    }

    pub fn mode_for(&self, rel: &str, default: AdditiveMode) -> AdditiveMode {
        self.normalization
            .get(rel)
            .or_else(|| self.normalization.get(base_relation(rel)))
            .copied()
            .unwrap_or(default)
    }
}

/// The unified matrix plus the record of how each relation entered it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub unified: UnifiedMatrix,
    pub relations: Vec<RelationInfo>,
}

pub fn prepare(dataset: &SemanticDataset, opts: &BuildOptions) -> Result<Prepared> {
    opts.weights.validate(dataset.schema())?;
    let binary = reduce_hyperedges(dataset, opts.reduction)?;
    let mut normalized = Vec::with_capacity(binary.schema().relation_types().len());
    let mut relations = Vec::with_capacity(normalized.capacity());
    for rt in binary.schema().relation_types() {
        let raw = binary.adjacency_matrix(&rt.name)?;
        let mode = opts.mode_for(&rt.name, AdditiveMode::default_for(rt.range));
        let params = if raw.nnz() == 0 {
            NormalizationParams::identity(&rt.name, raw.rows(), raw.cols())
        } else {
            NormalizationParams::fit(&rt.name, &raw, mode)?
        };
        debug!(
            "relation {}: {} entries, mode {}, scale {}",
            rt.name,
            raw.nnz(),
            params.mode,
            params.scale
        );
        normalized.push(params.apply(&raw)?);
        relations.push(RelationInfo {
            name: rt.name.clone(),
            row_type: rt.endpoints[0].clone(),
            col_type: rt.endpoints[1].clone(),
            weight: opts.weights.get(&rt.name),
            normalization: params,
        });
    }
    let unified = assemble(&binary, &normalized, &opts.weights)?;
    Ok(Prepared { unified, relations })
}

pub fn build_model(dataset: &SemanticDataset, opts: &BuildOptions) -> Result<LatentModel> {
    let prepared = prepare(dataset, opts)?;
    model_from_prepared(&prepared, opts)
}

pub fn model_from_prepared(prepared: &Prepared, opts: &BuildOptions) -> Result<LatentModel> {
    let n = prepared.unified.dim();
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if opts.k > n {
        warn!("k = {} exceeds the {} entities; using k = {}", opts.k, n, n);
    }
    let mut model = LatentModel::decompose(&prepared.unified, &opts.eigen_options(n))?;
    model.set_relations(prepared.relations.clone());
    model.with_kernel(opts.kernel.clone())
}
