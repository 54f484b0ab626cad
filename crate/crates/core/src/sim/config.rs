use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Capacities, bandwidths and granularity of the simulated machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    pub gpu_capacity: u64,
    pub host_capacity: u64,
    pub storage_capacity: u64,
    /// Bytes per second between GPU and host.
    pub host_gpu_bandwidth: f64,
    /// Bytes per second to and from storage.
    pub storage_bandwidth: f64,
    pub page_size: u64,
    /// Floating-point operations per second.
    pub compute_rate: f64,
    pub bytes_per_value: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            gpu_capacity: 80 << 30,
            host_capacity: 256 << 30,
            storage_capacity: 8 << 40,
            host_gpu_bandwidth: 25e9,
            storage_bandwidth: 12e9,
            page_size: 16 << 10,
            compute_rate: 100e12,
            bytes_per_value: 4,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gpu_capacity == 0 || self.storage_capacity == 0 {
            return Err(invalid("tier capacities must be positive"));
        }
        if !(self.host_gpu_bandwidth > 0.0 && self.storage_bandwidth > 0.0 && self.compute_rate > 0.0) {
            return Err(invalid("bandwidths and compute rate must be positive"));
        }
        if !self.page_size.is_power_of_two() {
            return Err(invalid("page_size must be a power of two"));
        }
        if self.bytes_per_value == 0 {
            return Err(invalid("bytes_per_value must be positive"));
        }
        Ok(())
    }

    /// Machine with effectively unlimited capacity.
    pub fn unlimited() -> Self {
        Self {
            gpu_capacity: u64::MAX / 4,
            host_capacity: u64::MAX / 4,
            storage_capacity: u64::MAX / 4,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyKind {
    /// Partition-wise host cache, regathering backward, bypassed outputs.
    Grinnder,
    /// Gathered-input snapshots kept in host memory, OS swap beyond it.
    HongtuSwap,
    /// Like `HongtuSwap` but snapshots the aggregated intermediate instead.
    HongtuIntermediate,
    /// Everything lives on storage and is read per vertex.
    Naive,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Grinnder,
        PolicyKind::HongtuSwap,
        PolicyKind::HongtuIntermediate,
        PolicyKind::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Grinnder => "GRINNDER",
            Self::HongtuSwap => "HONGTU_SWAP",
            Self::HongtuIntermediate => "HONGTU_INTERMEDIATE",
            Self::Naive => "NAIVE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid(format!("unknown policy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheGranularity {
    /// Whole layers, evicted least-recently-used first; falls back to
    /// partitions when one layer does not fit.
    #[default]
    LayerLru,
    PartitionLru,
    /// Individual vertex records, read at page granularity.
    Vertex,
}

/// Whether host-cache contents survive across layers and epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Emptied at every layer; gradients flushed after every backward layer.
    #[default]
    Cold,
    /// Persists; outputs are written through to the cache and gradients stay
    /// host-resident while they fit.
    Warm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub cache_granularity: CacheGranularity,
    pub bypass_enabled: bool,
    pub cache_mode: CacheMode,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::new(PolicyKind::Grinnder)
    }
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            cache_granularity: CacheGranularity::LayerLru,
            bypass_enabled: true,
            cache_mode: CacheMode::Cold,
        }
    }
}
