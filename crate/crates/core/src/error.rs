use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },

    #[error("relationship `{rel}` references unknown entity type `{entity_type}`")]
    UnknownEndpoint { rel: String, entity_type: String },

    #[error("unknown relationship type `{0}`")]
    UnknownRelation(String),

    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),

    #[error("unknown entity `{entity_type}:{id}`")]
    UnknownEntity { entity_type: String, id: String },

    #[error("relationship `{rel}` expects {expected} endpoints, got {got}")]
    ArityMismatch {
        rel: String,
        expected: usize,
        got: usize,
    },

    #[error("weight {weight} out of range `{range}` for relationship `{rel}`")]
    WeightOutOfRange {
        rel: String,
        range: &'static str,
        weight: f64,
    },

    #[error("self-loop `{id}` rejected in unipartite relationship `{rel}`")]
    SelfLoop { rel: String, id: String },

    #[error("relationship `{0}` has arity > 2; reduce hyperedges first")]
    NotBinary(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty matrix cannot be normalized with mode `{0}`")]
    EmptyMatrix(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge after {iterations} restarts (max residual {max_residual:e}, tolerance {tolerance:e})")]
    NotConverged {
        iterations: usize,
        max_residual: f64,
        tolerance: f64,
        residuals: Vec<f64>,
    },

    #[error("von Neumann kernel pole: |alpha * lambda| = {0} >= 1")]
    KernelPole(f64),

    #[error("{0}")]
    Evaluation(String),

    #[error("stale artifact: {0}")]
    Stale(String),

    #[error("missing artifact `{}` (run `{stage}` first)", path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
