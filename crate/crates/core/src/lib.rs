//! Active learning of flat clusterings that are cuts of a hierarchical
//! clustering tree, driven by pairwise similarity queries.

pub mod error;
pub mod harness;
pub mod baselines;
pub mod eval;
pub mod hierarchy;
pub mod lca;
pub mod linkage;
pub mod nr;
pub mod oracle;
pub mod ots;
pub mod prior;
pub mod wdp;

pub use error::{Error, Result};
pub use hierarchy::{Clustering, Cut, CutCountTable, Hierarchy, LeafId, NodeId};
pub use lca::LcaIndex;
pub use prior::{k_tilde, AdversarialPrior, Prior};
