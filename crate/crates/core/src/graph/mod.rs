//! Typed semantic-network data model: schema, entities, edges and their
//! per-relationship sparse adjacency matrices.

mod dataset;
mod io;
mod schema;
mod sparse;

pub use dataset::{Attributes, DatasetStats, Edge, EdgeList, EntitySet, SemanticDataset};
pub use io::{dataset_to_text, load_dataset, parse_dataset, save_dataset};
pub use schema::{load_schema, EntityType, RelationType, Schema, Symmetry, WeightRange};
pub use sparse::SparseMatrix;
