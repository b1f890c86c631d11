//! TOML pipeline configuration. Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::Reduction;
use crate::error::{Error, Result};
use crate::index::IndexParams;
use crate::iptv::IptvGenParams;
use crate::learn::{Metric, SearchSpec, DEFAULT_GRID};
use crate::model::Kernel;
use crate::normalize::AdditiveMode;
use crate::pipeline::{BuildOptions, DEFAULT_K, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub schema: Option<PathBuf>,
    /// Raw edge file read by `ingest`.
    pub data: Option<PathBuf>,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub index: PathBuf,
    pub weights: Option<PathBuf>,
    /// Per-relationship normalization modes written by `learn-weights`.
    pub normalization: Option<PathBuf>,
    pub trace: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            schema: None,
            data: None,
            dataset: "dataset.tsv".into(),
            model: "model.tsv".into(),
            index: "index.tsv".into(),
            weights: None,
            normalization: None,
            trace: "trace.tsv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub k: usize,
    pub tol: f64,
    pub max_restarts: Option<usize>,
    pub kernel: String,
    pub alpha: Option<f64>,
    pub coeffs: Vec<f64>,
    pub reduction: String,
    /// Relationship name → additive mode.
    pub normalization: BTreeMap<String, String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            k: DEFAULT_K,
            tol: DEFAULT_TOL,
            max_restarts: None,
            kernel: "truncated".into(),
            alpha: None,
            coeffs: Vec::new(),
            reduction: "star".into(),
            normalization: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub branching: usize,
    pub capacity: usize,
    /// Candidates scored per query; unset means every indexed entity.
    pub budget: Option<usize>,
    /// Recommendable entity types; empty means all non-auxiliary types.
    pub targets: Vec<String>,
}

impl Default for IndexSection {
    fn default() -> Self {
        let p = IndexParams::default();
        IndexSection {
            branching: p.branching,
            capacity: p.capacity,
            budget: None,
            targets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendSection {
    pub k: usize,
    pub exclude_seen: bool,
}

impl Default for RecommendSection {
    fn default() -> Self {
        RecommendSection { k: 10, exclude_seen: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub target: Option<String>,
    pub metric: String,
    pub passes: usize,
    pub holdout: f64,
    pub grid: Vec<f64>,
}

impl Default for LearnSection {
    fn default() -> Self {
        LearnSection {
            target: None,
            metric: "auc".into(),
            passes: 2,
            holdout: 0.2,
            grid: DEFAULT_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: ModelSection,
    pub index: IndexSection,
    pub recommend: RecommendSection,
    pub learn: LearnSection,
    pub iptv: IptvGenParams,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut c: PipelineConfig = toml::from_str(text).map_err(|e| Error::parse(origin, line_of(text, &e), e.message()))?;
        c.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidArgument("no seed configured; set `seed` in the config or pass --seed".into()))
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::from_parts(&self.model.kernel, self.model.alpha, &self.model.coeffs)
    }

    pub fn build_options(&self) -> Result<BuildOptions> {
        let mut normalization = BTreeMap::new();
        for (rel, mode) in &self.model.normalization {
            normalization.insert(rel.clone(), mode.parse::<AdditiveMode>()?);
        }
        Ok(BuildOptions {
            k: self.model.k,
            tol: self.model.tol,
            max_restarts: self.model.max_restarts,
            seed: self.seed()?,
            reduction: self.model.reduction.parse::<Reduction>()?,
            weights: Default::default(),
            normalization,
            kernel: self.kernel()?,
        })
    }

    pub fn index_params(&self) -> Result<IndexParams> {
        Ok(IndexParams {
            branching: self.index.branching,
            capacity: self.index.capacity,
            seed: self.seed()?,
        })
    }

    pub fn metric(&self) -> Result<Metric> {
        self.learn.metric.parse()
    }

    pub fn search_spec(&self, build: BuildOptions) -> Result<SearchSpec> {
        Ok(SearchSpec {
            grid: self.learn.grid.clone(),
            metric: self.metric()?,
            passes: self.learn.passes,
            holdout: self.learn.holdout,
            seed: self.seed()?,
            build,
        })
    }
}

fn line_of(text: &str, e: &toml::de::Error) -> usize {
    e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}
