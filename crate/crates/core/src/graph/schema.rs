use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Symmetric,
    Asymmetric,
}

/// Admissible edge weights of a relationship type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightRange {
    /// Every edge has weight exactly 1.
    Unweighted,
    /// Strictly positive weights (counts, durations).
    Positive,
    /// Weights in {-1, +1}.
    Signed,
    /// Any finite real.
    Weighted,
}

impl WeightRange {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightRange::Unweighted => "unweighted",
            WeightRange::Positive => "positive",
            WeightRange::Signed => "signed",
            WeightRange::Weighted => "weighted",
        }
    }

    pub fn admits(self, weight: f64) -> bool {
        if !weight.is_finite() {
            return false;
        }
        match self {
            WeightRange::Unweighted => weight == 1.0,
            WeightRange::Positive => weight > 0.0,
            WeightRange::Signed => weight == 1.0 || weight == -1.0,
            WeightRange::Weighted => true,
        }
    }
}

impl FromStr for WeightRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "unweighted" => Ok(WeightRange::Unweighted),
            "positive" => Ok(WeightRange::Positive),
            "signed" => Ok(WeightRange::Signed),
            "weighted" => Ok(WeightRange::Weighted),
            other => Err(format!("unknown weight range `{other}`")),
        }
    }
}

impl Symmetry {
    pub fn as_str(self) -> &'static str {
        match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Asymmetric => "asymmetric",
        }
    }
}

impl FromStr for Symmetry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(Symmetry::Symmetric),
            "asymmetric" => Ok(Symmetry::Asymmetric),
            other => Err(format!("unknown symmetry `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityType {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationType {
    pub name: String,
    /// Entity-type names of the endpoints, in column order.
    pub endpoints: Vec<String>,
    pub symmetry: Symmetry,
    pub range: WeightRange,
}

impl RelationType {
    pub fn arity(&self) -> usize {
        self.endpoints.len()
    }

    /// Both endpoints of a binary relation share one entity type.
    pub fn is_unipartite(&self) -> bool {
        self.endpoints.len() == 2 && self.endpoints[0] == self.endpoints[1]
    }

    /// Endpoint order is irrelevant: symmetric with all endpoints of one type.
    pub(crate) fn is_unordered(&self) -> bool {
        self.symmetry == Symmetry::Symmetric && self.endpoints.windows(2).all(|w| w[0] == w[1])
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "REL {}", self.name)?;
        for e in &self.endpoints {
            write!(f, " {e}")?;
        }
        write!(f, " {} {}", self.range.as_str(), self.symmetry.as_str())
    }
}

/// Declared entity and relationship types, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    entity_types: Vec<EntityType>,
    relation_types: Vec<RelationType>,
    entity_lookup: HashMap<String, usize>,
    relation_lookup: HashMap<String, usize>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity_type(&mut self, name: &str, description: &str) -> Result<usize> {
        validate_name(name)?;
        if self.entity_lookup.contains_key(name) {
            return Err(Error::DuplicateName {
                kind: "entity type",
                name: name.to_string(),
            });
        }
        let idx = self.entity_types.len();
        self.entity_types.push(EntityType {
            name: name.to_string(),
            description: description.to_string(),
        });
        self.entity_lookup.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn add_relation_type(&mut self, rel: RelationType) -> Result<usize> {
        validate_name(&rel.name)?;
        if self.relation_lookup.contains_key(&rel.name) {
            return Err(Error::DuplicateName {
                kind: "relationship type",
                name: rel.name,
            });
        }
        if rel.endpoints.len() < 2 {
            return Err(Error::ArityMismatch {
                rel: rel.name,
                expected: 2,
                got: rel.endpoints.len(),
            });
        }
        for e in &rel.endpoints {
            if !self.entity_lookup.contains_key(e) {
                return Err(Error::UnknownEndpoint {
                    rel: rel.name.clone(),
                    entity_type: e.clone(),
                });
            }
        }
        let idx = self.relation_types.len();
        self.relation_lookup.insert(rel.name.clone(), idx);
        self.relation_types.push(rel);
        Ok(idx)
    }

    pub fn entity_types(&self) -> &[EntityType] {
        &self.entity_types
    }

    pub fn relation_types(&self) -> &[RelationType] {
        &self.relation_types
    }

    pub fn entity_type_index(&self, name: &str) -> Option<usize> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relation_lookup.get(name).copied()
    }

    pub fn relation(&self, name: &str) -> Result<&RelationType> {
        self.relation_index(name)
            .map(|i| &self.relation_types[i])
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    /// Parses the line-oriented schema text format.
    pub fn parse(text: &str, origin: &Path) -> Result<Schema> {
        let mut schema = Schema::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let located = |e: Error| match e {
                Error::Parse { .. } => e,
                other => Error::parse(origin, lineno, other.to_string()),
            };
            match tokens[0] {
                "ENTITY" => {
                    if tokens.len() < 2 {
                        return Err(Error::parse(origin, lineno, "ENTITY needs a name"));
                    }
                    let description = tokens[2..].join(" ");
                    schema
                        .add_entity_type(tokens[1], &description)
                        .map_err(located)?;
                }
                "REL" => {
                    // REL <name> <etype> <etype>+ <range> <symmetry>
                    if tokens.len() < 6 {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            "REL needs a name, at least two endpoint types, a weight range and a symmetry",
                        ));
                    }
                    let n = tokens.len();
                    let range: WeightRange = tokens[n - 2]
                        .parse()
                        .map_err(|m: String| Error::parse(origin, lineno, m))?;
                    let symmetry: Symmetry = tokens[n - 1]
                        .parse()
                        .map_err(|m: String| Error::parse(origin, lineno, m))?;
                    let rel = RelationType {
                        name: tokens[1].to_string(),
                        endpoints: tokens[2..n - 2].iter().map(|s| s.to_string()).collect(),
                        symmetry,
                        range,
                    };
                    schema.add_relation_type(rel).map_err(located)?;
                }
                other => {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("expected ENTITY or REL, found `{other}`"),
                    ))
                }
            }
        }
        Ok(schema)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entity_types {
            if e.description.is_empty() {
                out.push_str(&format!("ENTITY {}\n", e.name));
            } else {
                out.push_str(&format!("ENTITY {} {}\n", e.name, e.description));
            }
        }
        for r in &self.relation_types {
            out.push_str(&format!("{r}\n"));
        }
        out
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!("invalid type name `{name}`")));
    }
    Ok(())
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::parse(&text, path)
}
