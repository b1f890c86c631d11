//! The `semrec` command line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use crate::aggregate::{is_auxiliary_type, RelationshipWeights};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::graph::{load_dataset, load_schema, save_dataset, SemanticDataset};
use crate::index::{RecommenderIndex, Source};
use crate::iptv;
use crate::learn::{evaluate, learn_weights, split_holdout, trace_to_tsv, Metric};
use crate::manifest::{check_fresh, Manifest};
use crate::model::LatentModel;
use crate::normalize::AdditiveMode;
use crate::num::fmt_f64;
use crate::pipeline::{build_model, BuildOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingArtifact { .. } => EXIT_MISSING,
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "semrec", version, about = "Spectral recommender for typed semantic networks")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run even if inputs changed since an artifact was made.
    #[arg(long, global = true)]
    pub force: bool,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Latent dimension.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = ["star", "clique"])]
    pub reduction: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct LearnArgs {
    /// Relationship whose held-out edges are predicted.
    #[arg(long)]
    pub target: Option<String>,
    /// auc, p@k, p@<n> or rmse.
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the raw edge file against the schema and write the dataset.
    Ingest,
    /// Decompose the dataset into a latent model.
    Build(ModelArgs),
    /// Cluster the model's entities into a recommender index.
    Index,
    /// Top-k entities for a source entity.
    Recommend {
        /// Source entity as `type:id`.
        #[arg(long)]
        source: String,
        /// Number of recommendations.
        #[arg(long)]
        k: Option<usize>,
        /// Candidates scored per query.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        exclude_seen: Option<bool>,
    },
    /// Score of one entity pair.
    Predict {
        /// First entity as `type:id`.
        a: String,
        /// Second entity as `type:id`.
        b: String,
        /// Map the score back to this relationship's weight scale.
        #[arg(long)]
        relation: Option<String>,
    },
    /// Held-out link prediction quality of the configured model.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        learn: LearnArgs,
    },
    /// Search relationship weights and normalization modes.
    LearnWeights {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        learn: LearnArgs,
    },
    /// Write a synthetic IPTV dataset.
    GenerateIptv {
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        programs: Option<usize>,
    },
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let mut out = std::io::stdout().lock();
    match run(&cli, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::InvalidArgument(format!("config file {} not found", p.display())));
            }
            PipelineConfig::load(p)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    let text = match &cli.command {
        Command::Ingest => ingest(&cfg)?,
        Command::Build(m) => {
            apply_model_args(&mut cfg, m);
            build(&cfg, cli.force)?
        }
        Command::Index => index(&cfg, cli.force)?,
        Command::Recommend {
            source,
            k,
            budget,
            exclude_seen,
        } => {
            if let Some(k) = k {
                cfg.recommend.k = *k;
            }
            if budget.is_some() {
                cfg.index.budget = *budget;
            }
            if let Some(x) = exclude_seen {
                cfg.recommend.exclude_seen = *x;
            }
            recommend(&cfg, source, cli.force)?
        }
        Command::Predict { a, b, relation } => predict(&cfg, a, b, relation.as_deref(), cli.force)?,
        Command::Evaluate { model, learn } => {
            apply_model_args(&mut cfg, model);
            apply_learn_args(&mut cfg, learn);
            evaluate_cmd(&cfg, cli.force)?
        }
        Command::LearnWeights { model, learn } => {
            apply_model_args(&mut cfg, model);
            apply_learn_args(&mut cfg, learn);
            learn_cmd(&cfg, cli.force)?
        }
        Command::GenerateIptv { out, users, programs } => {
            if let Some(u) = users {
                cfg.iptv.users = *u;
            }
            if let Some(p) = programs {
                cfg.iptv.programs = *p;
            }
            generate(&cfg, out)?
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn apply_model_args(cfg: &mut PipelineConfig, m: &ModelArgs) {
    if let Some(k) = m.k {
        cfg.model.k = k;
    }
    if let Some(kernel) = &m.kernel {
        cfg.model.kernel = kernel.clone();
    }
    if m.alpha.is_some() {
        cfg.model.alpha = m.alpha;
    }
    if let Some(r) = &m.reduction {
        cfg.model.reduction = r.clone();
    }
}

fn apply_learn_args(cfg: &mut PipelineConfig, l: &LearnArgs) {
    if l.target.is_some() {
        cfg.learn.target = l.target.clone();
    }
    if let Some(m) = &l.metric {
        cfg.learn.metric = m.clone();
    }
}

fn required(cfg: &PipelineConfig, p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    p.as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| Error::InvalidArgument(format!("`paths.{key}` is not configured")))
}

fn schema_path(cfg: &PipelineConfig) -> Result<PathBuf> {
    let p = required(cfg, &cfg.paths.schema, "schema")?;
    if !p.exists() {
        return Err(Error::MissingArtifact {
            stage: "generate-iptv or a hand-written schema",
            path: p,
        });
    }
    Ok(p)
}

fn load_ingested(cfg: &PipelineConfig, force: bool) -> Result<(SemanticDataset, PathBuf, PathBuf)> {
    let schema = schema_path(cfg)?;
    let data = cfg.resolve(&cfg.paths.dataset);
    check_fresh(&data, "ingest", force)?;
    let ds = load_dataset(load_schema(&schema)?, &data)?;
    Ok((ds, schema, data))
}

fn load_model(cfg: &PipelineConfig, force: bool) -> Result<(LatentModel, PathBuf)> {
    let path = cfg.resolve(&cfg.paths.model);
    check_fresh(&path, "build", force)?;
    Ok((LatentModel::load(&path)?, path))
}

/// Weights and normalization files written by `learn-weights`, when
/// configured, merged under the explicit config overrides.
fn build_options(cfg: &PipelineConfig, force: bool) -> Result<(BuildOptions, Vec<PathBuf>)> {
    let mut opts = cfg.build_options()?;
    let mut inputs = Vec::new();
    if let Some(p) = &cfg.paths.weights {
        let p = cfg.resolve(p);
        check_fresh(&p, "learn-weights", force)?;
        opts.weights = RelationshipWeights::load(&p)?;
        inputs.push(p);
    }
    if let Some(p) = &cfg.paths.normalization {
        let p = cfg.resolve(p);
        check_fresh(&p, "learn-weights", force)?;
        let mut modes = load_modes(&p)?;
        modes.append(&mut opts.normalization);
        opts.normalization = modes;
        inputs.push(p);
    }
    Ok((opts, inputs))
}

fn load_modes(path: &Path) -> Result<BTreeMap<String, AdditiveMode>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut modes = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (rel, mode) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `relation<TAB>mode`"))?;
        let mode = mode.parse().map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        modes.insert(rel.to_string(), mode);
    }
    Ok(modes)
}

fn modes_to_tsv(modes: &BTreeMap<String, AdditiveMode>) -> String {
    modes.iter().fold(String::new(), |mut s, (r, m)| {
        let _ = writeln!(s, "{r}\t{m}");
        s
    })
}

fn entity_ref(s: &str) -> Result<(&str, &str)> {
    s.split_once(':')
        .filter(|(t, id)| !t.is_empty() && !id.is_empty())
        .ok_or_else(|| Error::InvalidArgument(format!("entity `{s}` must be written as type:id")))
}

fn ms(t: Instant) -> u128 {
    t.elapsed().as_millis()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ingest(cfg: &PipelineConfig) -> Result<String> {
    let t = Instant::now();
    let schema = schema_path(cfg)?;
    let raw = required(cfg, &cfg.paths.data, "data")?;
    if !raw.exists() {
        return Err(Error::MissingArtifact {
            stage: "generate-iptv or a hand-written edge file",
            path: raw,
        });
    }
    let ds = load_dataset(load_schema(&schema)?, &raw)?;
    let out = cfg.resolve(&cfg.paths.dataset);
    write_file(&out, "")?;
    save_dataset(&ds, &out)?;
    Manifest::new("ingest", &out, cfg.seed.unwrap_or(0), &[&schema, &raw], json!({}))?
        .timing("total", ms(t))
        .write()?;
    Ok(ds.stats().to_tsv())
}

fn build(cfg: &PipelineConfig, force: bool) -> Result<String> {
    let t = Instant::now();
    let (ds, schema, data) = load_ingested(cfg, force)?;
    let (opts, extra) = build_options(cfg, force)?;
    let model = build_model(&ds, &opts)?;
    let decompose = ms(t);
    let out = cfg.resolve(&cfg.paths.model);
    write_file(&out, &model.to_text())?;
    let mut inputs: Vec<&Path> = vec![&schema, &data];
    inputs.extend(extra.iter().map(PathBuf::as_path));
    Manifest::new(
        "build",
        &out,
        opts.seed,
        &inputs,
        json!({
            "k": model.k(),
            "tol": opts.tol,
            "kernel": model.kernel().to_string().replace('\t', " "),
            "reduction": opts.reduction.as_str(),
        }),
    )?
    .timing("build", decompose)
    .timing("total", ms(t))
    .write()?;
    let mut s = format!("k\t{}\nn\t{}\n", model.k(), model.n());
    for (i, l) in model.eigenvalues().iter().enumerate() {
        let _ = writeln!(s, "eigenvalue\t{}\t{}", i + 1, fmt_f64(*l));
    }
    Ok(s)
}

fn index(cfg: &PipelineConfig, force: bool) -> Result<String> {
    let t = Instant::now();
    let (model, model_path) = load_model(cfg, force)?;
    let params = cfg.index_params()?;
    let idx = RecommenderIndex::build(&model, &cfg.index.targets, params)?;
    let out = cfg.resolve(&cfg.paths.index);
    write_file(&out, &idx.to_text())?;
    Manifest::new(
        "index",
        &out,
        params.seed,
        &[&model_path],
        json!({
            "branching": params.branching,
            "capacity": params.capacity,
            "targets": cfg.index.targets,
        }),
    )?
    .timing("total", ms(t))
    .write()?;
    Ok(format!(
        "entities\t{}\nleaves\t{}\ndepth\t{}\n",
        idx.len(),
        idx.leaves().len(),
        idx.depth()
    ))
}

/// Rows reachable from `row` through any binary relationship whose other
/// endpoint type is recommendable.
fn seen_rows(ds: &SemanticDataset, model: &LatentModel, entity_type: &str, id: &str, targets: &BTreeSet<String>) -> Result<BTreeSet<usize>> {
    let mut seen = BTreeSet::new();
    let Some(own) = ds.entities(entity_type)?.index_of(id) else {
        return Ok(seen);
    };
    for rt in ds.schema().relation_types().iter().filter(|r| r.arity() == 2) {
        for (here, there) in [(0, 1), (1, 0)] {
            if rt.endpoints[here] != entity_type || !targets.contains(&rt.endpoints[there]) {
                continue;
            }
            let other = ds.entities(&rt.endpoints[there])?;
            for e in ds.edges(&rt.name)?.iter().filter(|e| e.endpoints[here] == own) {
                seen.insert(model.layout().row_of(&rt.endpoints[there], other.id(e.endpoints[there]))?);
            }
        }
    }
    Ok(seen)
}

fn recommend(cfg: &PipelineConfig, source: &str, force: bool) -> Result<String> {
    let (t, id) = entity_ref(source)?;
    let (model, _) = load_model(cfg, force)?;
    let index_path = cfg.resolve(&cfg.paths.index);
    check_fresh(&index_path, "index", force)?;
    let idx = RecommenderIndex::load(&index_path, &model, force)?;
    let src_row = model.layout().row_of(t, id)?;

    let targets: BTreeSet<String> = if idx.targets().is_empty() {
        model
            .layout()
            .blocks()
            .iter()
            .filter(|b| !is_auxiliary_type(&b.name))
            .map(|b| b.name.clone())
            .collect()
    } else {
        idx.targets().iter().cloned().collect()
    };
    let mut exclusions = BTreeSet::from([src_row]);
    if cfg.recommend.exclude_seen {
        let (ds, _, _) = load_ingested(cfg, force)?;
        exclusions.extend(seen_rows(&ds, &model, t, id, &targets)?);
    }
    let k = cfg.recommend.k;
    let budget = cfg.index.budget.unwrap_or(idx.len()).max(k);
    let rec = idx.query(&model, Source::Entity(t, id), k, budget, &exclusions)?;
    if rec.truncated {
        warn!("only {} candidates available for {source}; fewer than k = {k}", rec.items.len());
    }
    info!("scored {} candidates, visited {} nodes", rec.scored, rec.nodes_visited);
    Ok(rec.to_tsv())
}

fn predict(cfg: &PipelineConfig, a: &str, b: &str, relation: Option<&str>, force: bool) -> Result<String> {
    let (model, _) = load_model(cfg, force)?;
    let (a, b) = (entity_ref(a)?, entity_ref(b)?);
    let score = match relation {
        Some(r) => model.predict_denormalized(a, b, r)?,
        None => model.predict(a, b)?,
    };
    Ok(format!("{}\t{}\t{}\t{}\t{}\n", a.0, a.1, b.0, b.1, fmt_f64(score)))
}

fn learn_target(cfg: &PipelineConfig) -> Result<String> {
    cfg.learn
        .target
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no target relationship; set `learn.target` or pass --target".into()))
}

fn evaluate_cmd(cfg: &PipelineConfig, force: bool) -> Result<String> {
    let (ds, _, _) = load_ingested(cfg, force)?;
    let (opts, _) = build_options(cfg, force)?;
    let target = learn_target(cfg)?;
    let metric: Metric = cfg.metric()?;
    let split = split_holdout(&ds, &target, cfg.learn.holdout, opts.seed)?;
    let model = build_model(&split.train, &opts)?;
    let v = evaluate(&model, &split, metric)?;
    Ok(format!("{metric}\t{}\n", fmt_f64(v)))
}

fn learn_cmd(cfg: &PipelineConfig, force: bool) -> Result<String> {
    let t = Instant::now();
    let (ds, schema, data) = load_ingested(cfg, force)?;
    let target = learn_target(cfg)?;
    let weights_path = required(cfg, &cfg.paths.weights, "weights")?;
    let mut opts = cfg.build_options()?;
    // Start from previously learned weights when present.
    if weights_path.exists() {
        opts.weights = RelationshipWeights::load(&weights_path)?;
    }
    let spec = cfg.search_spec(opts)?;
    let learned = learn_weights(&ds, &target, &spec)?;

    write_file(&weights_path, &learned.weights.to_tsv())?;
    let trace_path = cfg.resolve(&cfg.paths.trace);
    write_file(&trace_path, &trace_to_tsv(&learned.trace))?;
    let settings = json!({
        "target": target,
        "metric": spec.metric.to_string(),
        "passes": spec.passes,
        "holdout": spec.holdout,
        "grid": spec.grid,
        "score": learned.score,
    });
    let inputs: [&Path; 2] = [&schema, &data];
    Manifest::new("learn-weights", &weights_path, spec.seed, &inputs, settings.clone())?
        .timing("total", ms(t))
        .write()?;
    Manifest::new("learn-weights", &trace_path, spec.seed, &inputs, settings.clone())?
        .timing("total", ms(t))
        .write()?;
    if let Some(p) = &cfg.paths.normalization {
        let p = cfg.resolve(p);
        write_file(&p, &modes_to_tsv(&learned.modes))?;
        Manifest::new("learn-weights", &p, spec.seed, &inputs, settings)?
            .timing("total", ms(t))
            .write()?;
    }

    let mut s = format!("{}\t{}\n", spec.metric, fmt_f64(learned.score));
    for (rel, w) in learned.weights.iter() {
        let _ = writeln!(s, "{rel}\t{}\t{}", fmt_f64(w), learned.modes[rel]);
    }
    Ok(s)
}

fn generate(cfg: &PipelineConfig, out: &Path) -> Result<String> {
    let t = Instant::now();
    let mut params = cfg.iptv.clone();
    params.seed = cfg.seed()?;
    let out = cfg.resolve(out);
    let (schema, data) = iptv::write(&params, &out)?;
    let settings = serde_json::to_value(&params).expect("params serialize");
    Manifest::new("generate-iptv", &schema, params.seed, &[], settings.clone())?
        .timing("total", ms(t))
        .write()?;
    Manifest::new("generate-iptv", &data, params.seed, &[], settings)?
        .timing("total", ms(t))
        .write()?;
    let ds = load_dataset(load_schema(&schema)?, &data)?;
    Ok(ds.stats().to_tsv())
}
