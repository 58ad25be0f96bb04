use std::path::PathBuf;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("edge list contains no edges")]
    EmptyGraph,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("node {0} has no embedding row")]
    MissingNode(NodeId),

    #[error("score map has degenerate weights (all scores are zero)")]
    DegenerateWeights,

    #[error("input contains NaN or infinite values")]
    NonFinite,

    #[error("training diverged at batch {batch}: {term} loss is {value}")]
    Diverged {
        batch: usize,
        term: &'static str,
        value: f64,
    },

    #[error("negative sampling failed: {found} of {needed} non-edges found after {attempts} attempts")]
    NegativeSampling {
        needed: usize,
        found: usize,
        attempts: usize,
    },

    #[error("both classes are required, got {positives} positive and {negatives} negative examples")]
    SingleClass { positives: usize, negatives: usize },

    #[error("bad embedding file: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
