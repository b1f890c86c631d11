use std::collections::{BTreeMap, HashMap};

use super::schema::{Schema, WeightRange};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

pub type Attributes = BTreeMap<String, String>;

/// Identifiers of one entity type, indexed densely in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntitySet {
    ids: Vec<String>,
    attributes: Vec<Attributes>,
    lookup: HashMap<String, usize>,
}

impl EntitySet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn attributes(&self, index: usize) -> &Attributes {
        &self.attributes[index]
    }

    /// Returns the index of `id`, inserting it if absent. Attributes merge.
    pub fn intern(&mut self, id: &str, attrs: Attributes) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            self.attributes[i].extend(attrs);
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.attributes.push(attrs);
        self.lookup.insert(id.to_string(), i);
        i
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Entity indexes, one per endpoint column.
    pub endpoints: Vec<usize>,
    pub weight: f64,
    pub attributes: Attributes,
}

/// Edges of one relationship type, unique per endpoint tuple.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    edges: Vec<Edge>,
    lookup: HashMap<Vec<usize>, usize>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Edge> {
        self.edges.iter()
    }

    pub fn get(&self, key: &[usize]) -> Option<&Edge> {
        self.lookup.get(key).map(|&i| &self.edges[i])
    }

    fn upsert(&mut self, key: Vec<usize>, edge: Edge) {
        match self.lookup.get(&key) {
            Some(&i) => self.edges[i] = edge,
            None => {
                self.lookup.insert(key, self.edges.len());
                self.edges.push(edge);
            }
        }
    }
}

/// Typed entities plus per-relationship edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDataset {
    schema: Schema,
    entities: Vec<EntitySet>,
    edges: Vec<EdgeList>,
}

impl SemanticDataset {
    pub fn new(schema: Schema) -> Self {
        let entities = vec![EntitySet::default(); schema.entity_types().len()];
        let edges = vec![EdgeList::default(); schema.relation_types().len()];
        SemanticDataset {
            schema,
            entities,
            edges,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn entities(&self, entity_type: &str) -> Result<&EntitySet> {
        let t = self.entity_type_index(entity_type)?;
        Ok(&self.entities[t])
    }

    pub fn entity_sets(&self) -> &[EntitySet] {
        &self.entities
    }

    pub fn edges(&self, rel: &str) -> Result<&EdgeList> {
        let r = self
            .schema
            .relation_index(rel)
            .ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        Ok(&self.edges[r])
    }

    pub fn edge_lists(&self) -> &[EdgeList] {
        &self.edges
    }

    fn entity_type_index(&self, name: &str) -> Result<usize> {
        self.schema
            .entity_type_index(name)
            .ok_or_else(|| Error::UnknownEntityType(name.to_string()))
    }

    pub fn add_entity(&mut self, entity_type: &str, id: &str, attrs: Attributes) -> Result<usize> {
        if id.is_empty() || id.contains(['\t', '\n']) {
            return Err(Error::InvalidArgument(format!("invalid entity id `{id}`")));
        }
        let t = self.entity_type_index(entity_type)?;
        Ok(self.entities[t].intern(id, attrs))
    }

    /// Inserts an edge; re-inserting the same endpoint tuple overwrites it.
    ///
    /// Unknown endpoint ids are added to their entity type. `weight` of
    /// `None` means 1.
    pub fn add_edge(
        &mut self,
        rel: &str,
        ids: &[&str],
        weight: Option<f64>,
        attrs: Attributes,
    ) -> Result<()> {
        let r = self
            .schema
            .relation_index(rel)
            .ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        let rt = &self.schema.relation_types()[r];
        if ids.len() != rt.arity() {
            return Err(Error::ArityMismatch {
                rel: rel.to_string(),
                expected: rt.arity(),
                got: ids.len(),
            });
        }
        let weight = weight.unwrap_or(1.0);
        if !rt.range.admits(weight) {
            return Err(Error::WeightOutOfRange {
                rel: rel.to_string(),
                range: rt.range.as_str(),
                weight,
            });
        }
        if rt.is_unipartite() && ids[0] == ids[1] {
            return Err(Error::SelfLoop {
                rel: rel.to_string(),
                id: ids[0].to_string(),
            });
        }
        let endpoint_types: Vec<usize> = rt
            .endpoints
            .iter()
            .map(|e| self.schema.entity_type_index(e).expect("validated schema"))
            .collect();
        let unordered = rt.is_unordered();
        let mut endpoints = Vec::with_capacity(ids.len());
        for (&t, id) in endpoint_types.iter().zip(ids) {
            if id.is_empty() || id.contains(['\t', '\n']) {
                return Err(Error::InvalidArgument(format!("invalid entity id `{id}`")));
            }
            endpoints.push(self.entities[t].intern(id, Attributes::new()));
        }
        let mut key = endpoints.clone();
        if unordered {
            key.sort_unstable();
        }
        self.edges[r].upsert(
            key,
            Edge {
                endpoints,
                weight,
                attributes: attrs,
            },
        );
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            entities: self
                .schema
                .entity_types()
                .iter()
                .zip(&self.entities)
                .map(|(t, s)| (t.name.clone(), s.len()))
                .collect(),
            edges: self
                .schema
                .relation_types()
                .iter()
                .zip(&self.edges)
                .map(|(r, l)| (r.name.clone(), l.len()))
                .collect(),
        }
    }

    /// Sparse adjacency of a binary relationship type.
    ///
    /// Rows index the first endpoint type, columns the second. Symmetric
    /// unipartite relations emit both orientations of every edge.
    pub fn adjacency_matrix(&self, rel: &str) -> Result<SparseMatrix> {
        let rt = self.schema.relation(rel)?;
        if rt.arity() != 2 {
            return Err(Error::NotBinary(rel.to_string()));
        }
        let rows = self.entities(&rt.endpoints[0])?.len();
        let cols = self.entities(&rt.endpoints[1])?.len();
        let mirror = rt.is_unipartite() && rt.is_unordered();
        let list = self.edges(rel)?;
        let mut triples = Vec::with_capacity(list.len() * if mirror { 2 } else { 1 });
        for e in list.iter() {
            let (i, j) = (e.endpoints[0], e.endpoints[1]);
            triples.push((i, j, e.weight));
            if mirror {
                triples.push((j, i, e.weight));
            }
        }
        SparseMatrix::from_triples(rows, cols, triples)
    }

    /// Copy of this dataset sharing the entity sets, with `rel`'s edges
    /// replaced by `keep`.
    pub(crate) fn with_edges_replaced(&self, rel: &str, keep: &[Edge]) -> Result<Self> {
        let r = self
            .schema
            .relation_index(rel)
            .ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        let unordered = self.schema.relation_types()[r].is_unordered();
        let mut out = self.clone();
        out.edges[r] = EdgeList::default();
        for e in keep {
            let mut key = e.endpoints.clone();
            if unordered {
                key.sort_unstable();
            }
            out.edges[r].upsert(key, e.clone());
        }
        Ok(out)
    }

    /// Assembles a dataset from parts produced inside the crate (hyperedge
    /// reduction). Edges are trusted to satisfy the schema.
    pub(crate) fn from_parts(schema: Schema, entities: Vec<EntitySet>, edge_sets: Vec<Vec<Edge>>) -> Self {
        let mut edges = Vec::with_capacity(edge_sets.len());
        for (rt, set) in schema.relation_types().iter().zip(edge_sets) {
            let unordered = rt.is_unordered();
            let mut list = EdgeList::default();
            for e in set {
                let mut key = e.endpoints.clone();
                if unordered {
                    key.sort_unstable();
                }
                list.upsert(key, e);
            }
            edges.push(list);
        }
        SemanticDataset {
            schema,
            entities,
            edges,
        }
    }

    /// Equality up to edge ordering within each relationship type.
    pub fn same_content(&self, other: &SemanticDataset) -> bool {
        if self.schema != other.schema || self.entities != other.entities {
            return false;
        }
        self.edges.iter().zip(&other.edges).all(|(a, b)| {
            a.len() == b.len()
                && a.lookup.iter().all(|(key, &i)| {
                    b.lookup.get(key).map(|&j| &b.edges[j]) == Some(&a.edges[i])
                })
        })
    }
}

/// Entity and edge counts per declared type, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub entities: Vec<(String, usize)>,
    pub edges: Vec<(String, usize)>,
}

impl DatasetStats {
    pub fn entity_count(&self, name: &str) -> Option<usize> {
        self.entities.iter().find(|(n, _)| n == name).map(|p| p.1)
    }

    pub fn edge_count(&self, name: &str) -> Option<usize> {
        self.edges.iter().find(|(n, _)| n == name).map(|p| p.1)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kind\tname\tcount\n");
        for (n, c) in &self.entities {
            out.push_str(&format!("entity\t{n}\t{c}\n"));
        }
        for (n, c) in &self.edges {
            out.push_str(&format!("relation\t{n}\t{c}\n"));
        }
        out
    }
}

impl WeightRange {
    /// Weight range for derived relations whose weights accumulate.
    pub(crate) fn accumulated(self) -> WeightRange {
        match self {
            WeightRange::Unweighted | WeightRange::Positive => WeightRange::Positive,
            WeightRange::Signed | WeightRange::Weighted => WeightRange::Weighted,
        }
    }
}
