use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown node {node} (graph has {num_nodes} nodes)")]
    UnknownNode { node: usize, num_nodes: usize },
    #[error("out-of-order interaction: time {time} precedes last recorded time {last}")]
    OutOfOrder { time: f64, last: f64 },
    #[error("neighbor at time {neighbor_time} lies after current time {current}")]
    FutureNeighbor { neighbor_time: f64, current: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {dump}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        dump: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
