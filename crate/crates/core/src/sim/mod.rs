//! GPU/host/storage hierarchy model: policies, caches, ledgers and timing.

mod amplification;
mod cache;
mod config;
mod formulas;
mod ledger;
mod oracle;
mod runtime;
mod schedule;
mod sweep;
mod time;

pub use amplification::{page_charge, read_amplification_report, trace_amplification, Amplification};
pub use cache::{CacheKey, HostCache, Lookup, VertexCache};
pub use config::{CacheGranularity, CacheMode, HierarchyConfig, PolicyKind, PolicySpec};
pub use formulas::{
    crossover_threshold, per_partition_traffic, predicted_peak_memory, predicted_traffic, LinkBytes, PhaseTraffic,
    TierPeaks,
};
pub use ledger::{CacheStats, IoLedger, Kind, LedgerSummary, Link, Phase, Stage, Tier, Transfer};
pub use oracle::{oracle_check, OracleDelta, OracleReport};
pub use runtime::{simulate_epoch, simulate_epochs, Access, BackwardSource, Executor, ModelShape, NoopExecutor, Simulator};
pub use schedule::schedule_partitions;
pub use sweep::{backward_time, crossover_sweep, exact_expansion_plan, flip_ratio, sweep_ratios, SweepPoint};
pub use time::{modeled_time, stage_times, StageTime};
