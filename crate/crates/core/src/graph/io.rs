//! Edge-file reading and writing.
//!
//! One record per line, tab separated. Relationship rows are
//! `rel <id>… [weight] [key=value…]`; `!entity <type> <id> [key=value…]`
//! declares an entity without edges. `#` starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use super::dataset::{Attributes, SemanticDataset};
use super::schema::{Schema, WeightRange};
use crate::error::{Error, Result};
use crate::num::{fmt_f64, parse_f64};

const ENTITY_MARKER: &str = "!entity";

pub fn load_dataset(schema: Schema, path: impl AsRef<Path>) -> Result<SemanticDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(schema, &text, path)
}

pub fn parse_dataset(schema: Schema, text: &str, origin: &Path) -> Result<SemanticDataset> {
    let mut dataset = SemanticDataset::new(schema);
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let at = |e: Error| Error::parse(origin, lineno, e.to_string());
        if cols[0] == ENTITY_MARKER {
            if cols.len() < 3 {
                return Err(Error::parse(origin, lineno, "`!entity` needs a type and an id"));
            }
            let attrs = parse_attributes(&cols[3..]).map_err(|m| Error::parse(origin, lineno, m))?;
            dataset.add_entity(cols[1], cols[2], attrs).map_err(at)?;
            continue;
        }
        let arity = dataset.schema().relation(cols[0]).map_err(at)?.arity();
        if cols.len() < 1 + arity {
            return Err(at(Error::ArityMismatch {
                rel: cols[0].to_string(),
                expected: arity,
                got: cols.len() - 1,
            }));
        }
        let ids = &cols[1..1 + arity];
        let mut rest = &cols[1 + arity..];
        let mut weight = None;
        if let Some(first) = rest.first() {
            if !first.contains('=') {
                weight = Some(parse_f64(first).ok_or_else(|| {
                    Error::parse(origin, lineno, format!("invalid weight `{first}`"))
                })?);
                rest = &rest[1..];
            }
        }
        let attrs = parse_attributes(rest).map_err(|m| Error::parse(origin, lineno, m))?;
        dataset.add_edge(cols[0], ids, weight, attrs).map_err(at)?;
    }
    Ok(dataset)
}

fn parse_attributes(cols: &[&str]) -> std::result::Result<Attributes, String> {
    let mut attrs = Attributes::new();
    for c in cols {
        if c.is_empty() {
            continue;
        }
        let (k, v) = c
            .split_once('=')
            .ok_or_else(|| format!("expected key=value attribute, found `{c}`"))?;
        attrs.insert(k.to_string(), v.to_string());
    }
    Ok(attrs)
}

pub fn dataset_to_text(dataset: &SemanticDataset) -> String {
    let mut out = String::new();
    let schema = dataset.schema();
    for (t, set) in schema.entity_types().iter().zip(dataset.entity_sets()) {
        for (i, id) in set.ids().iter().enumerate() {
            let _ = write!(out, "{ENTITY_MARKER}\t{}\t{id}", t.name);
            write_attributes(&mut out, set.attributes(i));
            out.push('\n');
        }
    }
    for (r, list) in dataset.edge_lists().iter().enumerate() {
        let rt = &schema.relation_types()[r];
        let sets: Vec<_> = rt
            .endpoints
            .iter()
            .map(|e| &dataset.entity_sets()[schema.entity_type_index(e).expect("validated schema")])
            .collect();
        for e in list.iter() {
            out.push_str(&rt.name);
            for (set, &idx) in sets.iter().zip(&e.endpoints) {
                out.push('\t');
                out.push_str(set.id(idx));
            }
            if rt.range != WeightRange::Unweighted {
                out.push('\t');
                out.push_str(&fmt_f64(e.weight));
            }
            write_attributes(&mut out, &e.attributes);
            out.push('\n');
        }
    }
    out
}

fn write_attributes(out: &mut String, attrs: &Attributes) {
    for (k, v) in attrs {
        let _ = write!(out, "\t{k}={v}");
    }
}

pub fn save_dataset(dataset: &SemanticDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset_to_text(dataset)).map_err(|e| Error::io(path, e))
}
