use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("graph contains a directed cycle; use sigma_separated for cyclic graphs")]
    CyclicGraph,

    #[error("graphs do not share the same node set")]
    NodeSetMismatch,

    #[error("invalid edge {src} -> {dst}: {reason}")]
    InvalidEdge {
        src: usize,
        dst: usize,
        reason: &'static str,
    },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate context indicator: {0}")]
    DegenerateIndicator(String),

    #[error("model generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
