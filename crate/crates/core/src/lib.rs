//! Out-of-core full-graph GCN training on a simulated GPU/host/storage
//! hierarchy.

// Float checks are written `!(x > 0.0)` so NaN fails them; layer loops
// index several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod graph;
pub mod matrix;
pub mod par;
pub mod partition;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use graph::{CsrGraph, LabeledDataset};
pub use matrix::FeatureMatrix;
pub use partition::{PartitionLabels, PartitionerParams};
pub use sim::{HierarchyConfig, IoLedger, PolicyKind, PolicySpec};
pub use train::{ModelConfig, ModelState, PartitionPlan};
