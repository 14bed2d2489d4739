use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the numerical and model layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for {num_nodes} nodes")]
    IndexOutOfRange { index: usize, num_nodes: usize },

    #[error("self-loop {0}-{0} not allowed in the input edge list")]
    SelfLoop(usize),

    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),

    #[error("ragged features: {0}")]
    RaggedFeatures(String),

    #[error("graph has {0} nodes, dense representation capped at {1}")]
    TooManyNodes(usize, usize),

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {defect:e}")]
    NotSymmetric { i: usize, j: usize, defect: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("spectral map undefined at eigenvalue {0}")]
    DomainError(f64),

    #[error("signal is annihilated by the operator")]
    DegenerateSignal,

    #[error("divergent diffusion series: {0}")]
    DivergentSeries(String),

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
