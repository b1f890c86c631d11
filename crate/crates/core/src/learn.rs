//! Held-out link prediction and coordinate search over relationship weights.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregate::RelationshipWeights;
use crate::error::{Error, Result};
use crate::graph::{Edge, SemanticDataset, WeightRange};
use crate::linalg::dot;
use crate::model::LatentModel;
use crate::normalize::AdditiveMode;
use crate::num::fmt_f64;
use crate::pipeline::{build_model, BuildOptions};

pub const MIN_TARGET_EDGES: usize = 10;
pub const DEFAULT_GRID: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Auc,
    PrecisionAtK(usize),
    Rmse,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Rmse)
    }

    /// `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Auc => f.write_str("auc"),
            Metric::PrecisionAtK(10) => f.write_str("p@k"),
            Metric::PrecisionAtK(k) => write!(f, "p@{k}"),
            Metric::Rmse => f.write_str("rmse"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auc" => Ok(Metric::Auc),
            "rmse" => Ok(Metric::Rmse),
            "p@k" | "precision_at_k" => Ok(Metric::PrecisionAtK(10)),
            _ => s
                .strip_prefix("p@")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(Metric::PrecisionAtK)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}` (auc, p@k, p@<n>, rmse)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub target: String,
    pub train: SemanticDataset,
    /// Endpoint index pairs (row type, column type) with their weights.
    pub test: Vec<(usize, usize, f64)>,
    pub negatives: Vec<(usize, usize)>,
}

/// Withholds `floor(fraction · |E|)` random edges of `target` and draws as
/// many non-edges between its endpoint types.
pub fn split_holdout(dataset: &SemanticDataset, target: &str, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("holdout fraction {fraction} not in (0, 1)")));
    }
    let rt = dataset.schema().relation(target)?;
    if rt.arity() != 2 {
        return Err(Error::NotBinary(target.to_string()));
    }
    let edges: Vec<Edge> = dataset.edges(target)?.iter().cloned().collect();
    if edges.len() < MIN_TARGET_EDGES {
        return Err(Error::InvalidArgument(format!(
            "relationship `{target}` has {} edges; at least {MIN_TARGET_EDGES} are needed for a holdout split",
            edges.len()
        )));
    }
    let n_test = (fraction * edges.len() as f64).floor() as usize;
    if n_test == 0 || n_test == edges.len() {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} leaves an empty {} set",
            if n_test == 0 { "test" } else { "training" }
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut rng);
    let mut is_test = vec![false; edges.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let train_edges: Vec<Edge> = edges.iter().zip(&is_test).filter(|(_, t)| !**t).map(|(e, _)| e.clone()).collect();
    let test = edges
        .iter()
        .zip(&is_test)
        .filter(|(_, t)| **t)
        .map(|(e, _)| (e.endpoints[0], e.endpoints[1], e.weight))
        .collect();

    let unipartite = rt.is_unipartite();
    let nr = dataset.entities(&rt.endpoints[0])?.len();
    let nc = dataset.entities(&rt.endpoints[1])?.len();
    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(2 * edges.len());
    for e in &edges {
        let (a, b) = (e.endpoints[0], e.endpoints[1]);
        present.insert((a, b));
        if unipartite {
            present.insert((b, a));
        }
    }
    let is_edge = |a: usize, b: usize| present.contains(&(a, b));
    let capacity = nr * nc - if unipartite { nr } else { 0 };
    let available = capacity.saturating_sub(if unipartite { 2 * edges.len() } else { edges.len() });
    let want = n_test.min(available);
    if want < n_test {
        warn!("only {want} non-edges available for `{target}`; using fewer negatives than test edges");
    }
    let mut negatives = Vec::with_capacity(want);
    let mut chosen = HashSet::new();
    while negatives.len() < want {
        let (a, b) = (rng.gen_range(0..nr), rng.gen_range(0..nc));
        if (unipartite && a == b) || is_edge(a, b) {
            continue;
        }
        let key = if unipartite { (a.min(b), a.max(b)) } else { (a, b) };
        if chosen.insert(key) {
            negatives.push((a, b));
        }
    }
    Ok(HoldoutSplit {
        target: target.to_string(),
        train: dataset.with_edges_replaced(target, &train_edges)?,
        test,
        negatives,
    })
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Evaluation("AUC needs at least one positive and one negative".into()));
    }
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for &p in positives {
        let below = neg.partition_point(|&n| n < p);
        let upto = neg.partition_point(|&n| n <= p);
        acc += below as f64 + 0.5 * (upto - below) as f64;
    }
    Ok(acc / (positives.len() as f64 * neg.len() as f64))
}

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Evaluation("RMSE of an empty set".into()));
    }
    Ok((pairs.iter().map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt())
}

/// Scores a model trained on `split.train` against the withheld edges.
pub fn evaluate(model: &LatentModel, split: &HoldoutSplit, metric: Metric) -> Result<f64> {
    if split.test.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let rt = split.train.schema().relation(&split.target)?;
    let (rtype, ctype) = (&rt.endpoints[0], &rt.endpoints[1]);
    let layout = model.layout();
    let (roff, coff) = (layout.block(rtype)?.offset, layout.block(ctype)?.offset);
    let spectrum = model.transformed_spectrum();
    let score = |a: usize, b: usize| {
        let x = model.row(roff + a);
        let y: Vec<f64> = model.row(coff + b).iter().zip(&spectrum).map(|(v, f)| v * f).collect();
        dot(x, &y)
    };
    match metric {
        Metric::Auc => {
            let pos: Vec<f64> = split.test.iter().map(|&(a, b, _)| score(a, b)).collect();
            let neg: Vec<f64> = split.negatives.iter().map(|&(a, b)| score(a, b)).collect();
            auc(&pos, &neg)
        }
        Metric::Rmse => {
            let info = model
                .relations()
                .iter()
                .find(|r| r.name == split.target)
                .ok_or_else(|| Error::Evaluation(format!("model has no normalization record for `{}`", split.target)))?;
            let pairs: Vec<(f64, f64)> = split
                .test
                .iter()
                .map(|&(a, b, w)| (info.normalization.denormalize(score(a, b), a, b), w))
                .collect();
            rmse(&pairs)
        }
        Metric::PrecisionAtK(k) => {
            let train = split.train.edges(&split.target)?;
            let mut seen: HashMap<usize, HashSet<usize>> = HashMap::new();
            for e in train.iter() {
                seen.entry(e.endpoints[0]).or_default().insert(e.endpoints[1]);
                if rt.is_unipartite() {
                    seen.entry(e.endpoints[1]).or_default().insert(e.endpoints[0]);
                }
            }
            let mut relevant: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
            for &(a, b, _) in &split.test {
                relevant.entry(a).or_default().insert(b);
            }
            let nc = split.train.entities(ctype)?.len();
            let per_source: Vec<f64> = relevant
                .par_iter()
                .map(|(&a, rel)| {
                    let seen_a = seen.get(&a);
                    let mut ranked: Vec<(f64, usize)> = (0..nc)
                        .filter(|&b| !(rt.is_unipartite() && b == a) && !seen_a.is_some_and(|s| s.contains(&b)))
                        .map(|b| (score(a, b), b))
                        .collect();
                    ranked.sort_by(|x, y| (y.0 + 0.0).total_cmp(&(x.0 + 0.0)).then(x.1.cmp(&y.1)));
                    ranked.iter().take(k).filter(|(_, b)| rel.contains(b)).count() as f64 / k as f64
                })
                .collect();
            Ok(per_source.iter().sum::<f64>() / per_source.len() as f64)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchSpec {
    pub grid: Vec<f64>,
    pub metric: Metric,
    pub passes: usize,
    pub holdout: f64,
    pub seed: u64,
    /// Decomposition settings; its weights and normalization overrides are
    /// the starting point of the search.
    pub build: BuildOptions,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            grid: DEFAULT_GRID.to_vec(),
            metric: Metric::Auc,
            passes: 2,
            holdout: 0.2,
            seed: 0,
            build: BuildOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub pass: usize,
    pub relation: String,
    pub weight: f64,
    pub mode: AdditiveMode,
    pub metric: f64,
}

#[derive(Debug, Clone)]
pub struct LearnedWeights {
    pub weights: RelationshipWeights,
    pub modes: BTreeMap<String, AdditiveMode>,
    pub score: f64,
    pub trace: Vec<TraceRow>,
}

pub fn trace_to_tsv(trace: &[TraceRow]) -> String {
    let mut out = String::from("pass\trelation\tweight\tmode\tmetric\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.pass,
            r.relation,
            fmt_f64(r.weight),
            r.mode,
            fmt_f64(r.metric)
        );
    }
    out
}

/// Coordinate search: for every non-target relationship in schema order,
/// all grid weights (and, for valued relationships, all normalization
/// modes) are evaluated with the others held fixed, and the best one kept.
/// The current point is always among the candidates, so the score never
/// degrades; equal scores go to the smaller weight, then the earlier mode.
pub fn learn_weights(dataset: &SemanticDataset, target: &str, spec: &SearchSpec) -> Result<LearnedWeights> {
    if spec.grid.is_empty() || spec.grid.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("weight grid must be non-empty, finite and nonnegative".into()));
    }
    let schema = dataset.schema();
    let target_rt = schema.relation(target)?;
    let split = split_holdout(dataset, target, spec.holdout, spec.seed)?;

    let mut weights = spec.build.weights.clone();
    weights.set(target, 1.0)?;
    let mut modes: BTreeMap<String, AdditiveMode> = BTreeMap::new();
    for rt in schema.relation_types() {
        let m = spec.build.mode_for(&rt.name, AdditiveMode::default_for(rt.range));
        modes.insert(rt.name.clone(), m);
    }

    let mut cache: HashMap<String, Option<f64>> = HashMap::new();
    let mut run = |cands: &[(RelationshipWeights, BTreeMap<String, AdditiveMode>)]| -> Vec<Option<f64>> {
        let keys: Vec<String> = cands.iter().map(|(w, m)| candidate_key(w, m)).collect();
        let todo: Vec<usize> = {
            let mut seen = HashSet::new();
            (0..cands.len())
                .filter(|&i| !cache.contains_key(&keys[i]) && seen.insert(keys[i].clone()))
                .collect()
        };
        let fresh: Vec<Option<f64>> = todo
            .par_iter()
            .map(|&i| {
                let (w, m) = &cands[i];
                let opts = BuildOptions {
                    weights: w.clone(),
                    normalization: m.clone(),
                    ..spec.build.clone()
                };
                match build_model(&split.train, &opts).and_then(|model| evaluate(&model, &split, spec.metric)) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        warn!("skipping candidate {}: {e}", keys[i].replace('\n', " "));
                        None
                    }
                }
            })
            .collect();
        for (i, v) in todo.into_iter().zip(fresh) {
            cache.insert(keys[i].clone(), v);
        }
        keys.iter().map(|k| cache[k]).collect()
    };

    let base = run(&[(weights.clone(), modes.clone())])[0]
        .ok_or_else(|| Error::Evaluation("baseline model could not be built".into()))?;
    let mut best = base;
    let mut trace = vec![TraceRow {
        pass: 0,
        relation: target.to_string(),
        weight: 1.0,
        mode: modes[target],
        metric: base,
    }];
    info!("baseline {} = {}", spec.metric, fmt_f64(base));

    let mut grid = spec.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for pass in 1..=spec.passes {
        let before = (weights.clone(), modes.clone());
        for rt in schema.relation_types().iter().filter(|r| r.name != target_rt.name) {
            let mode_menu: Vec<AdditiveMode> = match rt.range {
                WeightRange::Unweighted => vec![modes[&rt.name]],
                _ => AdditiveMode::ALL.to_vec(),
            };
            let mut cands = Vec::new();
            let mut labels = Vec::new();
            for &w in &grid {
                for &m in &mode_menu {
                    let mut cw = weights.clone();
                    cw.set(&rt.name, w)?;
                    let mut cm = modes.clone();
                    cm.insert(rt.name.clone(), m);
                    cands.push((cw, cm));
                    labels.push((w, m));
                }
            }
            let scores = run(&cands);
            let mut pick: Option<(usize, f64)> = None;
            for (i, s) in scores.iter().enumerate() {
                let Some(s) = *s else { continue };
                trace.push(TraceRow {
                    pass,
                    relation: rt.name.clone(),
                    weight: labels[i].0,
                    mode: labels[i].1,
                    metric: s,
                });
                if pick.is_none_or(|(_, b)| spec.metric.better(s, b)) {
                    pick = Some((i, s));
                }
            }
            // The current point is a candidate, so `pick` can only match or
            // improve on `best`.
            if let Some((i, s)) = pick {
                if !spec.metric.better(best, s) {
                    let (w, m) = labels[i];
                    weights.set(&rt.name, w)?;
                    modes.insert(rt.name.clone(), m);
                    best = s;
                }
            }
            info!(
                "pass {pass} {}: weight {} mode {} -> {}",
                rt.name,
                fmt_f64(weights.get(&rt.name)),
                modes[&rt.name],
                fmt_f64(best)
            );
        }
        if (weights.clone(), modes.clone()) == before {
            break;
        }
    }

    let mut explicit = RelationshipWeights::new();
    for rt in schema.relation_types() {
        explicit.set(&rt.name, weights.get(&rt.name))?;
    }
    Ok(LearnedWeights {
        weights: explicit,
        modes,
        score: best,
        trace,
    })
}

fn candidate_key(w: &RelationshipWeights, m: &BTreeMap<String, AdditiveMode>) -> String {
    let mut s = w.to_tsv();
    for (k, v) in m {
        let _ = writeln!(s, "{k}\t{v}");
    }
    s
}
