use std::path::PathBuf;

/// Errors raised while reading a graph bundle from disk.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("missing bundle file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: expected {expected} {what}, found {found}")]
    DimensionMismatch {
        file: &'static str,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("labels.tsv: node {node} has label {label} outside [0, {classes})")]
    LabelOutOfRange { node: usize, label: usize, classes: usize },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("empty node set: {0}")]
    EmptyMask(&'static str),
    #[error("support set of anchor {0} is degenerate")]
    DegenerateSupport(usize),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
