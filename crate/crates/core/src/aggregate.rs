//! Hyperedge reduction and assembly of the unified symmetric matrix.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Edge, EntitySet, RelationType, Schema, SemanticDataset, SparseMatrix, Symmetry};
use crate::num::{fmt_f64, parse_f64};

/// Separator between an original relationship name and the suffix of the
/// binary relations derived from it. Entity types containing it are auxiliary.
pub const DERIVED_SEP: char = '#';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Star,
    Clique,
}

impl Reduction {
    pub fn as_str(self) -> &'static str {
        match self {
            Reduction::Star => "star",
            Reduction::Clique => "clique",
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(Reduction::Star),
            "clique" => Ok(Reduction::Clique),
            other => Err(Error::InvalidArgument(format!("unknown reduction `{other}`"))),
        }
    }
}

/// Name of the original relationship a (possibly derived) relation came from.
pub fn base_relation(name: &str) -> &str {
    name.split(DERIVED_SEP).next().unwrap_or(name)
}

/// Auxiliary entity types (hyperedge hubs) are not recommendable by default.
pub fn is_auxiliary_type(name: &str) -> bool {
    name.contains(DERIVED_SEP)
}

/// Rewrites every relationship of arity ≥ 3 into binary relations.
///
/// Star: each hyperedge of `R` becomes a hub entity of type `R#hub` linked
/// to each endpoint through `R#star:<pos>:<type>`. Clique: each hyperedge
/// becomes all pairwise edges, typed `R#pair:<typeA>-<typeB>`, with
/// repeated pairs summed.
pub fn reduce_hyperedges(dataset: &SemanticDataset, mode: Reduction) -> Result<SemanticDataset> {
    let schema = dataset.schema();
    if schema.relation_types().iter().all(|r| r.arity() == 2) {
        return Ok(dataset.clone());
    }
    let mut out_schema = Schema::new();
    for t in schema.entity_types() {
        out_schema.add_entity_type(&t.name, &t.description)?;
    }
    let mut entities: Vec<EntitySet> = dataset.entity_sets().to_vec();
    let mut edge_sets: Vec<Vec<Edge>> = Vec::new();

    for (r, rt) in schema.relation_types().iter().enumerate() {
        let list = &dataset.edge_lists()[r];
        if rt.arity() == 2 {
            out_schema.add_relation_type(rt.clone())?;
            edge_sets.push(list.iter().cloned().collect());
            continue;
        }
        let type_index: Vec<usize> = rt
            .endpoints
            .iter()
            .map(|e| schema.entity_type_index(e).expect("validated schema"))
            .collect();
        match mode {
            Reduction::Star => {
                let hub_type = format!("{}{DERIVED_SEP}hub", rt.name);
                out_schema.add_entity_type(&hub_type, &format!("hyperedges of {}", rt.name))?;
                let mut hubs = EntitySet::default();
                let hub_ids: Vec<usize> = (0..list.len())
                    .map(|n| hubs.intern(&format!("{}{DERIVED_SEP}{n}", rt.name), Default::default()))
                    .collect();
                entities.push(hubs);
                for (pos, etype) in rt.endpoints.iter().enumerate() {
                    out_schema.add_relation_type(RelationType {
                        name: format!("{}{DERIVED_SEP}star:{pos}:{etype}", rt.name),
                        endpoints: vec![hub_type.clone(), etype.clone()],
                        symmetry: Symmetry::Asymmetric,
                        range: rt.range,
                    })?;
                    edge_sets.push(
                        list.iter()
                            .zip(&hub_ids)
                            .map(|(e, &hub)| Edge {
                                endpoints: vec![hub, e.endpoints[pos]],
                                weight: e.weight,
                                attributes: Default::default(),
                            })
                            .collect(),
                    );
                }
            }
            Reduction::Clique => {
                // (relation name, accumulated pair weights), in creation order
                let mut pair_rels: Vec<(String, BTreeMap<(usize, usize), f64>)> = Vec::new();
                let mut by_name: HashMap<String, usize> = HashMap::new();
                for p in 0..rt.arity() {
                    for q in p + 1..rt.arity() {
                        let (ta, tb) = (&rt.endpoints[p], &rt.endpoints[q]);
                        let name = format!("{}{DERIVED_SEP}pair:{ta}-{tb}", rt.name);
                        let slot = *by_name.entry(name.clone()).or_insert_with(|| {
                            pair_rels.push((name.clone(), BTreeMap::new()));
                            out_schema
                                .add_relation_type(RelationType {
                                    name,
                                    endpoints: vec![ta.clone(), tb.clone()],
                                    symmetry: if ta == tb { Symmetry::Symmetric } else { Symmetry::Asymmetric },
                                    range: rt.range.accumulated(),
                                })
                                .expect("derived names are unique");
                            pair_rels.len() - 1
                        });
                        let unipartite = type_index[p] == type_index[q];
                        for e in list.iter() {
                            let (mut a, mut b) = (e.endpoints[p], e.endpoints[q]);
                            if unipartite {
                                if a == b {
                                    continue;
                                }
                                if a > b {
                                    std::mem::swap(&mut a, &mut b);
                                }
                            }
                            *pair_rels[slot].1.entry((a, b)).or_insert(0.0) += e.weight;
                        }
                    }
                }
                for (_, acc) in pair_rels {
                    edge_sets.push(
                        acc.into_iter()
                            .filter(|&(_, w)| w != 0.0)
                            .map(|((a, b), w)| Edge {
                                endpoints: vec![a, b],
                                weight: w,
                                attributes: Default::default(),
                            })
                            .collect(),
                    );
                }
            }
        }
    }
    Ok(SemanticDataset::from_parts(out_schema, entities, edge_sets))
}

/// Per-relationship multipliers w_X. Missing relations weigh 1; derived
/// relations inherit the weight of their base relation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationshipWeights {
    weights: BTreeMap<String, f64>,
}

impl RelationshipWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, rel: &str, weight: f64) -> Result<()> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weight of `{rel}` must be finite and >= 0, got {weight}"
            )));
        }
        self.weights.insert(rel.to_string(), weight);
        Ok(())
    }

    pub fn with(mut self, rel: &str, weight: f64) -> Result<Self> {
        self.set(rel, weight)?;
        Ok(self)
    }

    pub fn get(&self, rel: &str) -> f64 {
        self.weights
            .get(rel)
            .or_else(|| self.weights.get(base_relation(rel)))
            .copied()
            .unwrap_or(1.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Every weight multiplied by `c`, including the implicit defaults of
    /// the relations in `schema`.
    pub fn scaled(&self, schema: &Schema, c: f64) -> Result<Self> {
        let mut out = RelationshipWeights::new();
        for rt in schema.relation_types() {
            out.set(base_relation(&rt.name), self.get(base_relation(&rt.name)) * c)?;
        }
        for (k, v) in self.iter() {
            out.set(k, v * c)?;
        }
        Ok(out)
    }

    /// At least one relationship of `schema` must carry positive weight.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if schema.relation_types().iter().any(|r| self.get(&r.name) > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("all relationship weights are zero".into()))
        }
    }

    pub fn to_tsv(&self) -> String {
        self.weights
            .iter()
            .map(|(k, &v)| format!("{k}\t{}\n", fmt_f64(v)))
            .collect()
    }

    pub fn parse_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut out = RelationshipWeights::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (rel, w) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno + 1, "expected `rel<TAB>weight`"))?;
            let w = parse_f64(w)
                .ok_or_else(|| Error::parse(origin, lineno + 1, format!("invalid weight `{w}`")))?;
            out.set(rel, w)
                .map_err(|e| Error::parse(origin, lineno + 1, e.to_string()))?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityBlock {
    pub name: String,
    pub offset: usize,
    pub ids: Vec<String>,
}

/// Placement of every entity type as a contiguous block of rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityLayout {
    blocks: Vec<EntityBlock>,
    by_name: HashMap<String, usize>,
    by_id: Vec<HashMap<String, usize>>,
}

impl EntityLayout {
    pub fn from_dataset(dataset: &SemanticDataset) -> Self {
        let blocks = dataset
            .schema()
            .entity_types()
            .iter()
            .zip(dataset.entity_sets())
            .map(|(t, s)| (t.name.clone(), s.ids().to_vec()))
            .collect::<Vec<_>>();
        Self::from_blocks(blocks)
    }

    pub fn from_blocks(blocks: Vec<(String, Vec<String>)>) -> Self {
        let mut layout = EntityLayout::default();
        let mut offset = 0;
        for (name, ids) in blocks {
            layout.by_name.insert(name.clone(), layout.blocks.len());
            layout
                .by_id
                .push(ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect());
            let n = ids.len();
            layout.blocks.push(EntityBlock { name, offset, ids });
            offset += n;
        }
        layout
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.ids.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[EntityBlock] {
        &self.blocks
    }

    pub fn block(&self, entity_type: &str) -> Result<&EntityBlock> {
        self.by_name
            .get(entity_type)
            .map(|&b| &self.blocks[b])
            .ok_or_else(|| Error::UnknownEntityType(entity_type.to_string()))
    }

    pub fn row_of(&self, entity_type: &str, id: &str) -> Result<usize> {
        let b = *self
            .by_name
            .get(entity_type)
            .ok_or_else(|| Error::UnknownEntityType(entity_type.to_string()))?;
        self.by_id[b]
            .get(id)
            .map(|&i| self.blocks[b].offset + i)
            .ok_or_else(|| Error::UnknownEntity {
                entity_type: entity_type.to_string(),
                id: id.to_string(),
            })
    }

    /// (entity type, id) of a global row.
    pub fn entity_of(&self, row: usize) -> Option<(&str, &str)> {
        let b = self.blocks.partition_point(|b| b.offset + b.ids.len() <= row);
        let block = self.blocks.get(b)?;
        Some((&block.name, &block.ids[row - block.offset]))
    }

    /// Rows whose entity type is in `types`, ascending.
    pub fn rows_of_types(&self, types: &[String]) -> Result<Vec<usize>> {
        let mut rows = Vec::new();
        for t in types {
            let b = self.block(t)?;
            rows.extend(b.offset..b.offset + b.ids.len());
        }
        rows.sort_unstable();
        rows.dedup();
        Ok(rows)
    }

    /// The layout is a prefix-compatible extension of `self`: every block
    /// keeps its name, order, and leading ids.
    pub fn is_extended_by(&self, other: &EntityLayout) -> bool {
        self.blocks.len() <= other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| {
                a.name == b.name && a.ids.len() <= b.ids.len() && b.ids[..a.ids.len()] == a.ids[..]
            })
    }
}

/// The weighted symmetric block matrix over all entities.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedMatrix {
    pub matrix: SparseMatrix,
    pub layout: EntityLayout,
}

impl UnifiedMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Places every normalized relation matrix into its blocks.
///
/// `normalized[r]` belongs to the r-th relation of `dataset`'s schema, which
/// must be binary. Bipartite relations fill blocks (P,Q) and (Q,P);
/// unipartite ones contribute (R̄ + R̄ᵀ)/2 to their diagonal block.
pub fn assemble(
    dataset: &SemanticDataset,
    normalized: &[SparseMatrix],
    weights: &RelationshipWeights,
) -> Result<UnifiedMatrix> {
    let schema = dataset.schema();
    if normalized.len() != schema.relation_types().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} relation matrices for {} relationship types",
            normalized.len(),
            schema.relation_types().len()
        )));
    }
    let layout = EntityLayout::from_dataset(dataset);
    let n = layout.len();
    let parts: Vec<Result<Vec<(usize, usize, f64)>>> = schema
        .relation_types()
        .par_iter()
        .zip(normalized.par_iter())
        .map(|(rt, m)| {
            if rt.arity() != 2 {
                return Err(Error::NotBinary(rt.name.clone()));
            }
            let w = weights.get(&rt.name);
            let p = layout.block(&rt.endpoints[0])?;
            let q = layout.block(&rt.endpoints[1])?;
            if m.rows() != p.ids.len() || m.cols() != q.ids.len() {
                return Err(Error::DimensionMismatch(format!(
                    "relation `{}` is {}x{}, blocks are {}x{}",
                    rt.name,
                    m.rows(),
                    m.cols(),
                    p.ids.len(),
                    q.ids.len()
                )));
            }
            if w == 0.0 {
                return Ok(Vec::new());
            }
            let mut out = Vec::with_capacity(2 * m.nnz());
            if p.name == q.name {
                for &(i, j, v) in m.triples() {
                    if i == j {
                        continue;
                    }
                    let half = (w * v) / 2.0;
                    out.push((p.offset + i, p.offset + j, half));
                    out.push((p.offset + j, p.offset + i, half));
                }
            } else {
                for &(i, j, v) in m.triples() {
                    let x = w * v;
                    out.push((p.offset + i, q.offset + j, x));
                    out.push((q.offset + j, p.offset + i, x));
                }
            }
            Ok(out)
        })
        .collect();
    let mut triples = Vec::new();
    for part in parts {
        triples.extend(part?);
    }
    let matrix = SparseMatrix::with_pattern(n, n, triples)?;
    Ok(UnifiedMatrix { matrix, layout })
}
