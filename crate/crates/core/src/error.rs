//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix handed to the SO(3) projection has a singular value at or
    /// below the rank tolerance.
    #[error("matrix is rank-deficient, cannot project to SO(3)")]
    DegenerateMatrix,

    /// The point configuration does not determine a rigid transform.
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector is not unit-norm (|norm - 1| = {deviation:.3e})")]
    NotNormalized { deviation: f64 },

    #[error("need at least 2 scans, got {n}")]
    InsufficientScans { n: usize },

    #[error("top-k parameter k={k} must satisfy 1 <= k < n ({n} scans)")]
    InvalidK { k: usize, n: usize },

    #[error("scan {scan} cannot be scored: missing global feature")]
    MissingFeatures { scan: usize },

    #[error("scan {scan} has no points")]
    EmptyScan { scan: usize },

    #[error("scan {scan} has no descriptors")]
    MissingDescriptors { scan: usize },

    #[error("edge ({i},{j}) has no inlier count")]
    MissingInlierCount { i: usize, j: usize },

    #[error("edge ({i},{j}) has no relative pose")]
    MissingRelativePose { i: usize, j: usize },

    #[error("need at least 3 correspondences, got {n}")]
    TooFewCorrespondences { n: usize },

    #[error("RANSAC found no consensus (best inlier count below 3)")]
    NoConsensus,

    #[error("pose graph is disconnected above the weight floor")]
    DisconnectedGraph,

    #[error("eigenvector block of node {node} is rank-deficient")]
    DegenerateBlock { node: usize },

    #[error("translation normal system is singular beyond the fixed gauge")]
    SingularSystem,

    #[error("iteration index {m} outside 1..={max}")]
    OutOfRange { m: usize, max: usize },

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("connected component containing node {node} has no edges")]
    EmptyComponent { node: usize },

    #[error("evaluation pair list is empty")]
    EmptyEvaluationSet,

    #[error("empty input")]
    EmptyInput,

    #[error("self edge ({i},{i}) rejected")]
    SelfEdge { i: usize },

    #[error("duplicate edge ({i},{j}) rejected")]
    DuplicateEdge { i: usize, j: usize },

    #[error("edge endpoint {node} out of range (graph has {n} scans)")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
