use crate::hierarchy::NodeId;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} has {children} children; every internal node needs exactly two")]
    NotBinary { node: usize, children: usize },
    #[error("the parent structure contains a cycle")]
    Cyclic,
    #[error("expected exactly one root, found {0:?}")]
    MultipleRoots(Vec<usize>),
    #[error("node {0} is referenced as a child more than once")]
    MultipleParents(usize),
    #[error("nodes unreachable from the root: {0:?}")]
    Disconnected(Vec<usize>),
    #[error("node id {0} is out of range")]
    BadNodeId(usize),
    #[error("a hierarchy needs at least two leaves")]
    TooFewLeaves,
    #[error("expected {expected} leaf payloads, got {got}")]
    PayloadMismatch { expected: usize, got: usize },
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("node {0} is a leaf, an internal node is required")]
    LeafNode(NodeId),
    #[error("leaf {0} was paired with itself")]
    SameLeaf(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("B = {budget} exceeds the number of sibling-leaf pairs ({available})")]
    BudgetTooLarge { budget: usize, available: usize },
    #[error("expected {expected} labels, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("reference covers {reference} leaves, candidate covers {candidate}")]
    UniverseMismatch { reference: usize, candidate: usize },
    #[error("revealed labels are inconsistent at node {0}")]
    InconsistentLabels(NodeId),
    #[error("the forest of unexplored subtrees is empty")]
    EmptyForest,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: row {row} has {got} components, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("{n} points exceed the distance-matrix cap of {cap}")]
    MemoryBudgetExceeded { n: usize, cap: usize },
    #[error("tree size {n} is not valid for a {kind} tree")]
    BadSize { kind: &'static str, n: usize },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
