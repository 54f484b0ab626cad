//! GCN training: whole-graph reference and partition-at-a-time engine.

mod fdcheck;
mod layer;
mod model;
mod partitioned;
mod plan;
mod reference;
mod trace;

pub use fdcheck::{finite_difference_check, FdReport, FD_ABS_FLOOR};
pub use layer::{
    aggregate, aggregate_transpose, apply_dropout, dropout_row, layer_forward, layer_forward_trace, regather,
    regather_backward, relu, row_normalize, row_normalize_backward, scatter_accumulate, snapshot_backward,
    softmax_cross_entropy, BackwardOutput, CachedLayer, LayerTrace, LossOutput, ROW_NORM_EPS,
};
pub use model::{read_checkpoint, write_checkpoint, AggregationMode, ModelConfig, ModelState};
pub use partitioned::{partitioned_train, regather_identity_check, ShadowReport};
pub use plan::{build_partition_plan, LocalTopology, PartitionPlan};
pub use reference::reference_train;
pub use trace::{EpochRecord, TrainTrace};
