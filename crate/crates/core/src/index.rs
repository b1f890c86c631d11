//! Top-k maximum inner product search over latent vectors.
//!
//! The index is a spherical k-means tree. Every node keeps the normalized
//! mean direction of its members, the largest angle between that direction
//! and any member, and the extreme member norms; together they bound x·a for
//! every member a under the node, so a best-first walk can stop once no
//! unexplored node can beat the current k-th score.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregate::is_auxiliary_type;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::model::LatentModel;
use crate::num::{fmt_f64, parse_f64};

const MAX_KMEANS_ITERS: usize = 25;
/// Relative slack added to node bounds to absorb rounding in acos/cos.
const BOUND_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    pub branching: usize,
    pub capacity: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            branching: 16,
            capacity: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NodeKind {
    Inner(Vec<usize>),
    /// Member positions.
    Leaf(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    /// Unit vector, or all zeros when the members have no mean direction.
    centroid: Vec<f64>,
    radius: f64,
    max_norm: f64,
    min_norm: f64,
    kind: NodeKind,
}

impl Node {
    fn bound(&self, q: &[f64], qnorm: f64) -> f64 {
        if self.max_norm == 0.0 || qnorm == 0.0 {
            return 0.0;
        }
        let slack = BOUND_SLACK * qnorm * self.max_norm;
        if self.centroid.iter().all(|&c| c == 0.0) {
            return qnorm * self.max_norm + slack;
        }
        let theta = (dot(q, &self.centroid) / qnorm).clamp(-1.0, 1.0).acos();
        let c = (theta - self.radius).max(0.0).cos();
        let m = if c >= 0.0 { self.max_norm } else { self.min_norm };
        qnorm * m * c + slack
    }
}

/// A ranked entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub row: usize,
    pub entity_type: String,
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub items: Vec<Scored>,
    /// Fewer than k candidates were available.
    pub truncated: bool,
    /// Candidates whose score was computed.
    pub scored: usize,
    /// Tree nodes whose bound was computed.
    pub nodes_visited: usize,
}

impl Recommendation {
    pub fn rows(&self) -> Vec<usize> {
        self.items.iter().map(|s| s.row).collect()
    }

    /// `type  id  score` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.items {
            let _ = writeln!(out, "{}\t{}\t{}", s.entity_type, s.id, fmt_f64(s.score));
        }
        out
    }
}

/// Where a query vector comes from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Vector(&'a [f64]),
    Entity(&'a str, &'a str),
}

impl Source<'_> {
    pub fn resolve(self, model: &LatentModel) -> Result<Vec<f64>> {
        let v = match self {
            Source::Vector(v) => {
                if v.len() != model.k() {
                    return Err(Error::DimensionMismatch(format!(
                        "query has {} components, model has {}",
                        v.len(),
                        model.k()
                    )));
                }
                v.to_vec()
            }
            Source::Entity(t, id) => model.row(model.layout().row_of(t, id)?).to_vec(),
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("query vector is not finite".into()));
        }
        Ok(v)
    }
}

/// Ordering key: higher score first, then lower row.
#[derive(Debug, Clone, Copy)]
struct Ranked(f64, usize);

impl PartialEq for Ranked {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked {
    fn cmp(&self, o: &Self) -> Ordering {
        // `+ 0.0` folds -0.0 into +0.0 so signed zeros tie.
        (self.0 + 0.0).total_cmp(&(o.0 + 0.0)).then(o.1.cmp(&self.1))
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Ranked>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn push(&mut self, r: Ranked) {
        if self.heap.len() < self.k {
            self.heap.push(Reverse(r));
        } else if self.heap.peek().is_some_and(|w| r > w.0) {
            self.heap.pop();
            self.heap.push(Reverse(r));
        }
    }

    fn threshold(&self) -> Option<f64> {
        (self.heap.len() == self.k).then(|| self.heap.peek().unwrap().0 .0)
    }

    fn into_sorted(self) -> Vec<Ranked> {
        let mut v: Vec<Ranked> = self.heap.into_iter().map(|r| r.0).collect();
        v.sort_by(|a, b| b.cmp(a));
        v
    }
}

fn finish(model: &LatentModel, ranked: Vec<Ranked>, k: usize, scored: usize) -> Recommendation {
    let items = ranked
        .into_iter()
        .map(|Ranked(score, row)| {
            let (t, id) = model.layout().entity_of(row).expect("row within layout");
            Scored {
                row,
                entity_type: t.to_string(),
                id: id.to_string(),
                score,
            }
        })
        .collect::<Vec<_>>();
    Recommendation {
        truncated: items.len() < k,
        items,
        scored,
        nodes_visited: 0,
    }
}

/// Kernel-scaled vector f(λ)∘v of a row.
fn scaled_row(model: &LatentModel, spectrum: &[f64], row: usize) -> Vec<f64> {
    model.row(row).iter().zip(spectrum).map(|(v, f)| v * f).collect()
}

/// Target rows: the given entity types, or every non-auxiliary type when
/// none are given.
pub fn target_rows(model: &LatentModel, targets: &[String]) -> Result<Vec<usize>> {
    let types: Vec<String> = if targets.is_empty() {
        model
            .layout()
            .blocks()
            .iter()
            .filter(|b| !is_auxiliary_type(&b.name))
            .map(|b| b.name.clone())
            .collect()
    } else {
        targets.to_vec()
    };
    model.layout().rows_of_types(&types)
}

/// Exact top-k by scoring every target row.
pub fn brute_force_topk(
    model: &LatentModel,
    source: Source<'_>,
    targets: &[String],
    k: usize,
    exclusions: &BTreeSet<usize>,
) -> Result<Recommendation> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let q = source.resolve(model)?;
    let spectrum = model.transformed_spectrum();
    let rows = target_rows(model, targets)?;
    let mut top = TopK::new(k);
    let mut scored = 0;
    for row in rows {
        if exclusions.contains(&row) {
            continue;
        }
        top.push(Ranked(dot(&q, &scaled_row(model, &spectrum, row)), row));
        scored += 1;
    }
    Ok(finish(model, top.into_sorted(), k, scored))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommenderIndex {
    params: IndexParams,
    targets: Vec<String>,
    fingerprint: String,
    dim: usize,
    /// Global rows of the members, ascending.
    rows: Vec<usize>,
    /// Members × dim, kernel-scaled.
    vectors: Vec<f64>,
    norms: Vec<f64>,
    /// Preorder; the root is node 0.
    nodes: Vec<Node>,
}

struct Builder<'a> {
    params: IndexParams,
    dim: usize,
    vectors: &'a [f64],
    norms: &'a [f64],
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn vec(&self, p: usize) -> &[f64] {
        &self.vectors[p * self.dim..(p + 1) * self.dim]
    }

    fn unit(&self, p: usize) -> Vec<f64> {
        let n = self.norms[p];
        self.vec(p).iter().map(|x| x / n).collect()
    }

    fn summarize(&self, members: &[usize], kind: NodeKind) -> Node {
        let mut sum = vec![0.0; self.dim];
        let (mut max_norm, mut min_norm) = (0.0f64, f64::INFINITY);
        for &p in members {
            let n = self.norms[p];
            max_norm = max_norm.max(n);
            min_norm = min_norm.min(n);
            if n > 0.0 {
                for (s, x) in sum.iter_mut().zip(self.vec(p)) {
                    *s += x / n;
                }
            }
        }
        let s = norm(&sum);
        let (centroid, radius) = if s > 1e-12 * members.len() as f64 {
            let c: Vec<f64> = sum.iter().map(|x| x / s).collect();
            let r = members
                .iter()
                .filter(|&&p| self.norms[p] > 0.0)
                .map(|&p| (dot(&c, self.vec(p)) / self.norms[p]).clamp(-1.0, 1.0).acos())
                .fold(0.0, f64::max);
            (c, r)
        } else {
            (vec![0.0; self.dim], std::f64::consts::PI)
        };
        Node {
            centroid,
            radius,
            max_norm,
            min_norm: if members.is_empty() { 0.0 } else { min_norm },
            kind,
        }
    }

    fn leaf(&mut self, members: Vec<usize>) -> usize {
        let node = self.summarize(&members, NodeKind::Leaf(members.clone()));
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Subtree over `members`, splitting with `split` until leaves fit.
    fn build(&mut self, members: Vec<usize>, split: &dyn Fn(&Self, &[usize], u64) -> Vec<Vec<usize>>) -> usize {
        if members.len() <= self.params.capacity {
            return self.leaf(members);
        }
        let at = self.nodes.len();
        let node = self.summarize(&members, NodeKind::Inner(Vec::new()));
        self.nodes.push(node);
        let seed = self.params.seed ^ (at as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut groups = split(self, &members, seed);
        if groups.len() < 2 {
            groups = chunks(&members, self.params.branching);
        }
        let children = groups.into_iter().map(|g| self.build(g, split)).collect();
        self.nodes[at].kind = NodeKind::Inner(children);
        at
    }

    /// Spherical k-means over the members' directions. Returns the
    /// non-empty clusters.
    fn kmeans(&self, members: &[usize], seed: u64) -> Vec<Vec<usize>> {
        let b = self.params.branching.min(members.len().div_ceil(self.params.capacity)).max(2);
        let units: Vec<Vec<f64>> = members.iter().map(|&p| self.unit(p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // k-means++ seeding on cosine distance.
        let mut centers: Vec<Vec<f64>> = vec![units[rng.gen_range(0..units.len())].clone()];
        let mut dist: Vec<f64> = units.iter().map(|u| 1.0 - dot(u, &centers[0])).collect();
        while centers.len() < b {
            let total: f64 = dist.iter().map(|d| d.max(0.0)).sum();
            if total <= 1e-12 {
                break;
            }
            let mut t = rng.gen::<f64>() * total;
            let mut pick = units.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                t -= d.max(0.0);
                if t <= 0.0 && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            let c = units[pick].clone();
            for (d, u) in dist.iter_mut().zip(&units) {
                *d = d.min(1.0 - dot(u, &c));
            }
            centers.push(c);
        }

        let mut assign = vec![usize::MAX; units.len()];
        for _ in 0..MAX_KMEANS_ITERS {
            let next: Vec<usize> = units
                .par_iter()
                .map(|u| {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for (c, center) in centers.iter().enumerate() {
                        let s = dot(u, center);
                        if s > best.0 {
                            best = (s, c);
                        }
                    }
                    best.1
                })
                .collect();
            if next == assign {
                break;
            }
            assign = next;
            let mut sums = vec![vec![0.0; self.dim]; centers.len()];
            for (u, &a) in units.iter().zip(&assign) {
                for (s, x) in sums[a].iter_mut().zip(u) {
                    *s += x;
                }
            }
            for (center, s) in centers.iter_mut().zip(sums) {
                let n = norm(&s);
                if n > 0.0 {
                    *center = s.into_iter().map(|x| x / n).collect();
                }
            }
        }
        let mut groups = vec![Vec::new(); centers.len()];
        for (&p, &a) in members.iter().zip(&assign) {
            groups[a].push(p);
        }
        groups.retain(|g| !g.is_empty());
        groups
    }
}

fn chunks(members: &[usize], b: usize) -> Vec<Vec<usize>> {
    let size = members.len().div_ceil(b.max(2));
    members.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

impl RecommenderIndex {
    /// Clusters the kernel-scaled vectors of the target rows. An empty
    /// `targets` list selects every non-auxiliary entity type.
    pub fn build(model: &LatentModel, targets: &[String], params: IndexParams) -> Result<Self> {
        if params.branching < 2 {
            return Err(Error::InvalidArgument("branching factor must be at least 2".into()));
        }
        if params.capacity < 1 {
            return Err(Error::InvalidArgument("leaf capacity must be at least 1".into()));
        }
        let rows = target_rows(model, targets)?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument("entity filter selects no entities".into()));
        }
        let mut index = Self::skeleton(model, targets, params, rows);

        let mut b = Builder {
            params,
            dim: index.dim,
            vectors: &index.vectors,
            norms: &index.norms,
            nodes: Vec::new(),
        };
        let (nonzero, zero): (Vec<usize>, Vec<usize>) = (0..index.rows.len()).partition(|&p| b.norms[p] > 0.0);
        let kmeans = |b: &Builder, m: &[usize], s: u64| b.kmeans(m, s);
        let by_order = |b: &Builder, m: &[usize], _: u64| chunks(m, b.params.branching);
        match (nonzero.is_empty(), zero.is_empty()) {
            (false, true) => {
                b.build(nonzero, &kmeans);
            }
            (true, false) => {
                b.build(zero, &by_order);
            }
            _ => {
                let all: Vec<usize> = (0..index.rows.len()).collect();
                let root = b.summarize(&all, NodeKind::Inner(Vec::new()));
                b.nodes.push(root);
                let left = b.build(nonzero, &kmeans);
                let right = b.build(zero, &by_order);
                b.nodes[0].kind = NodeKind::Inner(vec![left, right]);
            }
        }
        index.nodes = b.nodes;
        Ok(index)
    }

    fn skeleton(model: &LatentModel, targets: &[String], params: IndexParams, rows: Vec<usize>) -> Self {
        let spectrum = model.transformed_spectrum();
        let dim = model.k();
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for &r in &rows {
            vectors.extend(scaled_row(model, &spectrum, r));
        }
        let norms = vectors.chunks(dim.max(1)).map(norm).collect();
        RecommenderIndex {
            params,
            targets: targets.to_vec(),
            fingerprint: model.fingerprint(),
            dim,
            rows,
            vectors,
            norms,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> IndexParams {
        self.params
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Global rows of the indexed entities, ascending.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Leaf member lists as global rows, in tree order.
    pub fn leaves(&self) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Leaf(m) => Some(m.iter().map(|&p| self.rows[p]).collect()),
                NodeKind::Inner(_) => None,
            })
            .collect()
    }

    /// Centroids of the leaves, in the same order as `leaves`.
    pub fn leaf_centroids(&self) -> Vec<Vec<f64>> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf(_)))
            .map(|n| n.centroid.clone())
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i].kind {
                NodeKind::Leaf(_) => 1,
                NodeKind::Inner(c) => 1 + c.iter().map(|&j| go(nodes, j)).max().unwrap_or(0),
            }
        }
        go(&self.nodes, 0)
    }

    fn vec(&self, p: usize) -> &[f64] {
        &self.vectors[p * self.dim..(p + 1) * self.dim]
    }

    /// Best-first top-k search scoring at most `budget` candidates.
    /// Excluded rows are skipped without counting against the budget.
    pub fn query(
        &self,
        model: &LatentModel,
        source: Source<'_>,
        k: usize,
        budget: usize,
        exclusions: &BTreeSet<usize>,
    ) -> Result<Recommendation> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if budget < k {
            return Err(Error::InvalidArgument(format!("budget {budget} is smaller than k = {k}")));
        }
        if model.k() != self.dim || model.n() <= *self.rows.last().unwrap_or(&0) {
            return Err(Error::DimensionMismatch("index does not match the model".into()));
        }
        let q = source.resolve(model)?;
        let qnorm = norm(&q);
        let mut top = TopK::new(k);
        let mut scored = 0;
        let mut visited = 1;
        let mut frontier = BinaryHeap::new();
        frontier.push((Ranked(self.nodes[0].bound(&q, qnorm), 0), 0usize));
        'walk: while let Some((Ranked(bound, _), i)) = frontier.pop() {
            if top.threshold().is_some_and(|t| bound < t) {
                break;
            }
            match &self.nodes[i].kind {
                NodeKind::Inner(children) => {
                    for &c in children {
                        visited += 1;
                        frontier.push((Ranked(self.nodes[c].bound(&q, qnorm), c), c));
                    }
                }
                NodeKind::Leaf(members) => {
                    for &p in members {
                        let row = self.rows[p];
                        if exclusions.contains(&row) {
                            continue;
                        }
                        if scored == budget {
                            break 'walk;
                        }
                        top.push(Ranked(dot(&q, self.vec(p)), row));
                        scored += 1;
                    }
                }
            }
        }
        let mut rec = finish(model, top.into_sorted(), k, scored);
        rec.nodes_visited = visited;
        Ok(rec)
    }

    /// Text form: header, then the nodes in preorder.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "semrec-index\t1");
        let _ = writeln!(out, "branching\t{}", self.params.branching);
        let _ = writeln!(out, "capacity\t{}", self.params.capacity);
        let _ = writeln!(out, "seed\t{}", self.params.seed);
        let _ = writeln!(out, "model\t{}", self.fingerprint);
        out.push_str("targets");
        for t in &self.targets {
            let _ = write!(out, "\t{t}");
        }
        out.push('\n');
        let _ = writeln!(out, "nodes\t{}", self.nodes.len());
        for n in &self.nodes {
            let (tag, count) = match &n.kind {
                NodeKind::Inner(c) => ("node", c.len()),
                NodeKind::Leaf(m) => ("leaf", m.len()),
            };
            let _ = write!(
                out,
                "{tag}\t{count}\t{}\t{}\t{}",
                fmt_f64(n.radius),
                fmt_f64(n.max_norm),
                fmt_f64(n.min_norm)
            );
            for &c in &n.centroid {
                let _ = write!(out, "\t{}", fmt_f64(c));
            }
            out.push('\n');
            if let NodeKind::Leaf(m) = &n.kind {
                out.push_str("members");
                for &p in m {
                    let _ = write!(out, "\t{}", self.rows[p]);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, model: &LatentModel, force: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, model, force)
    }

    /// Reads an index written by `to_text`. Member vectors are recomputed
    /// from `model`, whose fingerprint must match unless `force` is set.
    pub fn parse(text: &str, origin: &Path, model: &LatentModel, force: bool) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split('\t').collect::<Vec<_>>()));
        let mut next = |want: &str| -> Result<(usize, Vec<&str>)> {
            let (no, f) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, format!("unexpected end of file, expected `{want}`")))?;
            if f[0] != want {
                return Err(Error::parse(origin, no, format!("expected `{want}`, found `{}`", f[0])));
            }
            Ok((no, f))
        };
        let int = |no: usize, s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(origin, no, format!("bad integer `{s}`")))
        };
        let float = |no: usize, s: &str| parse_f64(s).ok_or_else(|| Error::parse(origin, no, format!("bad number `{s}`")));
        let single = |no: usize, f: &[&str]| -> Result<String> {
            match f {
                [_, v] => Ok(v.to_string()),
                _ => Err(Error::parse(origin, no, "expected one value")),
            }
        };

        let (no, f) = next("semrec-index")?;
        if single(no, &f)? != "1" {
            return Err(Error::parse(origin, no, "unsupported index version"));
        }
        let (no, f) = next("branching")?;
        let branching = int(no, &single(no, &f)?)?;
        let (no, f) = next("capacity")?;
        let capacity = int(no, &single(no, &f)?)?;
        let (no, f) = next("seed")?;
        let seed = single(no, &f)?
            .parse()
            .map_err(|_| Error::parse(origin, no, "bad seed"))?;
        let (no, f) = next("model")?;
        let fingerprint = single(no, &f)?;
        if fingerprint != model.fingerprint() && !force {
            return Err(Error::Stale(format!(
                "{} was built for model {}, current model is {}",
                origin.display(),
                fingerprint,
                model.fingerprint()
            )));
        }
        let (_, f) = next("targets")?;
        let targets: Vec<String> = f[1..].iter().map(|s| s.to_string()).collect();
        let params = IndexParams {
            branching,
            capacity,
            seed,
        };
        let rows = target_rows(model, &targets)?;
        let mut index = Self::skeleton(model, &targets, params, rows);
        index.fingerprint = fingerprint;
        let (no, f) = next("nodes")?;
        let count = int(no, &single(no, &f)?)?;

        // Preorder: each inner node's children follow it, subtree by subtree.
        let mut raw = Vec::with_capacity(count);
        let mut lines = lines;
        for _ in 0..count {
            let (no, f) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, "unexpected end of file in node list"))?;
            if f.len() != 5 + index.dim || (f[0] != "node" && f[0] != "leaf") {
                return Err(Error::parse(origin, no, "malformed node line"));
            }
            let n = int(no, f[1])?;
            let radius = float(no, f[2])?;
            let max_norm = float(no, f[3])?;
            let min_norm = float(no, f[4])?;
            let centroid = f[5..].iter().map(|s| float(no, s)).collect::<Result<Vec<_>>>()?;
            let kind = if f[0] == "leaf" {
                let (mno, m) = lines
                    .next()
                    .ok_or_else(|| Error::parse(origin, no, "leaf without members line"))?;
                if m[0] != "members" || m.len() != n + 1 {
                    return Err(Error::parse(origin, mno, "malformed members line"));
                }
                let mut members = Vec::with_capacity(n);
                for s in &m[1..] {
                    let row = int(mno, s)?;
                    let p = index
                        .rows
                        .binary_search(&row)
                        .map_err(|_| Error::parse(origin, mno, format!("row {row} is not an indexed entity")))?;
                    members.push(p);
                }
                NodeKind::Leaf(members)
            } else {
                NodeKind::Inner(vec![usize::MAX; n])
            };
            raw.push(Node {
                centroid,
                radius,
                max_norm,
                min_norm,
                kind,
            });
        }
        if lines.next().is_some_and(|(_, f)| !f.concat().trim().is_empty()) {
            return Err(Error::parse(origin, 0, "trailing content after node list"));
        }
        fn link(nodes: &mut [Node], at: usize, cursor: &mut usize) -> Option<()> {
            let n = match &nodes[at].kind {
                NodeKind::Inner(c) => c.len(),
                NodeKind::Leaf(_) => return Some(()),
            };
            for slot in 0..n {
                let child = *cursor;
                if child >= nodes.len() {
                    return None;
                }
                *cursor += 1;
                if let NodeKind::Inner(c) = &mut nodes[at].kind {
                    c[slot] = child;
                }
                link(nodes, child, cursor)?;
            }
            Some(())
        }
        let mut cursor = 1;
        if raw.is_empty() || link(&mut raw, 0, &mut cursor).is_none() || cursor != raw.len() {
            return Err(Error::parse(origin, 0, "node list is not a valid preorder tree"));
        }
        let mut seen = vec![false; index.rows.len()];
        for n in &raw {
            if let NodeKind::Leaf(m) = &n.kind {
                for &p in m {
                    if std::mem::replace(&mut seen[p], true) {
                        return Err(Error::parse(origin, 0, "entity listed in two leaves"));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::parse(origin, 0, "leaves do not cover the target entities"));
        }
        index.nodes = raw;
        Ok(index)
    }
}

/// Mean fraction of the exact top-k that the index recovers.
pub fn measure_recall(
    index: &RecommenderIndex,
    model: &LatentModel,
    queries: &[Vec<f64>],
    k: usize,
    budget: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Ok(1.0);
    }
    let none = BTreeSet::new();
    let per_query = queries
        .par_iter()
        .map(|q| {
            let exact = brute_force_topk(model, Source::Vector(q), index.targets(), k, &none)?.rows();
            if exact.is_empty() {
                return Ok(1.0);
            }
            let got: BTreeSet<usize> = index.query(model, Source::Vector(q), k, budget, &none)?.rows().into_iter().collect();
            Ok(exact.iter().filter(|r| got.contains(r)).count() as f64 / exact.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_query.iter().sum::<f64>() / queries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::EntityLayout;

    /// Model whose kernel-scaled rows are exactly `vecs`.
    fn model_of(vecs: &[Vec<f64>]) -> LatentModel {
        let d = vecs[0].len();
        let ids = (0..vecs.len()).map(|i| format!("e{i}")).collect();
        let cols: Vec<Vec<f64>> = (0..d).map(|c| vecs.iter().map(|v| v[c]).collect()).collect();
        LatentModel::from_columns(vec![1.0; d], &cols, EntityLayout::from_blocks(vec![("item".into(), ids)]))
    }

    fn none() -> BTreeSet<usize> {
        BTreeSet::new()
    }

    #[test]
    fn small_instance_ranks_by_inner_product() {
        let m = model_of(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.7]]);
        let idx = RecommenderIndex::build(&m, &[], IndexParams::default()).unwrap();
        assert_eq!(idx.leaves().len(), 1);
        let r = idx.query(&m, Source::Vector(&[1.0, 0.0]), 1, 3, &none()).unwrap();
        assert_eq!((r.items[0].row, r.items[0].score), (0, 1.0));
        let r = idx.query(&m, Source::Vector(&[1.0, 0.0]), 2, 3, &none()).unwrap();
        assert_eq!(r.rows(), vec![0, 2]);
        assert_eq!(r.items[1].score, 0.7);
        assert!(!r.truncated);
    }

    #[test]
    fn symmetric_clusters_split_cleanly() {
        let mut v = vec![vec![1.0, 0.0]; 10];
        v.extend(vec![vec![0.0, 1.0]; 10]);
        let m = model_of(&v);
        let p = IndexParams {
            branching: 2,
            capacity: 10,
            seed: 3,
        };
        let idx = RecommenderIndex::build(&m, &[], p).unwrap();
        let mut leaves = idx.leaves();
        leaves.sort();
        assert_eq!(leaves, vec![(0..10).collect::<Vec<_>>(), (10..20).collect()]);
        let mut c = idx.leaf_centroids();
        c.sort_by(|a, b| b[0].total_cmp(&a[0]));
        assert_eq!(c, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn identical_vectors_still_respect_capacity() {
        let m = model_of(&vec![vec![0.3, 0.4]; 50]);
        let p = IndexParams {
            branching: 3,
            capacity: 4,
            seed: 0,
        };
        let idx = RecommenderIndex::build(&m, &[], p).unwrap();
        assert!(idx.leaves().iter().all(|l| l.len() <= 4));
        assert_eq!(idx.leaves().iter().map(Vec::len).sum::<usize>(), 50);
    }

    #[test]
    fn zero_vectors_tie_by_index() {
        let m = model_of(&vec![vec![0.0, 0.0]; 5]);
        let idx = RecommenderIndex::build(&m, &[], IndexParams::default()).unwrap();
        let r = idx.query(&m, Source::Vector(&[1.0, 2.0]), 3, 5, &none()).unwrap();
        assert_eq!(r.rows(), vec![0, 1, 2]);
        assert!(r.items.iter().all(|s| s.score == 0.0));
        let b = brute_force_topk(&m, Source::Vector(&[1.0, 2.0]), &[], 3, &none()).unwrap();
        assert_eq!((b.items, b.truncated), (r.items, r.truncated));
    }

    #[test]
    fn mixed_zero_and_nonzero() {
        let mut v = vec![vec![0.0, 0.0]; 7];
        v.extend((0..9).map(|i| vec![(i as f64).cos(), (i as f64).sin()]));
        let m = model_of(&v);
        let p = IndexParams {
            branching: 2,
            capacity: 2,
            seed: 1,
        };
        let idx = RecommenderIndex::build(&m, &[], p).unwrap();
        for q in [[1.0, 0.0], [-1.0, -0.2], [0.0, 0.0]] {
            let r = idx.query(&m, Source::Vector(&q), 16, 16, &none()).unwrap();
            let b = brute_force_topk(&m, Source::Vector(&q), &[], 16, &none()).unwrap();
            assert_eq!((r.items, r.truncated), (b.items, b.truncated));
        }
    }

    #[test]
    fn exclusions_and_truncation() {
        let m = model_of(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.7]]);
        let idx = RecommenderIndex::build(&m, &[], IndexParams::default()).unwrap();
        let ex: BTreeSet<usize> = [0].into();
        let r = idx.query(&m, Source::Entity("item", "e0"), 5, 5, &ex).unwrap();
        assert_eq!(r.rows(), vec![2, 1]);
        assert!(r.truncated);
        assert!(idx.query(&m, Source::Entity("item", "nope"), 1, 5, &ex).is_err());
        assert!(idx.query(&m, Source::Vector(&[1.0, 0.0]), 2, 1, &ex).is_err());
        assert!(idx.query(&m, Source::Vector(&[f64::NAN, 0.0]), 1, 1, &ex).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let m = model_of(&[vec![1.0]]);
        let p = IndexParams {
            branching: 1,
            ..IndexParams::default()
        };
        assert!(RecommenderIndex::build(&m, &[], p).is_err());
        assert!(RecommenderIndex::build(&m, &["user".into()], IndexParams::default()).is_err());
    }

    #[test]
    fn text_round_trip_and_staleness() {
        let v: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.1]).collect();
        let m = model_of(&v);
        let p = IndexParams {
            branching: 3,
            capacity: 5,
            seed: 9,
        };
        let idx = RecommenderIndex::build(&m, &[], p).unwrap();
        let back = RecommenderIndex::parse(&idx.to_text(), Path::new("i"), &m, false).unwrap();
        assert_eq!(back, idx);
        let other = model_of(&v[..39].iter().cloned().chain([vec![0.5, 0.5, 0.5]]).collect::<Vec<_>>());
        assert!(matches!(
            RecommenderIndex::parse(&idx.to_text(), Path::new("i"), &other, false),
            Err(Error::Stale(_))
        ));
        assert!(RecommenderIndex::parse(&idx.to_text(), Path::new("i"), &other, true).is_ok());
    }
}
