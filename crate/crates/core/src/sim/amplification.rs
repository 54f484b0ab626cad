use super::config::{CacheGranularity, HierarchyConfig};
use crate::train::PartitionPlan;
use serde::Serialize;

/// Bytes charged for reading the records `ids` (sorted, deduplicated) laid
/// out contiguously by id: each run of consecutive ids is rounded out to
/// whole pages.
pub fn page_charge(ids: &[u32], record_bytes: u64, page_size: u64) -> u64 {
    let mut total = 0;
    let mut i = 0;
    while i < ids.len() {
        let mut j = i;
        while j + 1 < ids.len() && ids[j + 1] == ids[j] + 1 {
            j += 1;
        }
        let start = ids[i] as u64 * record_bytes;
        let end = (ids[j] as u64 + 1) * record_bytes;
        total += (end.div_ceil(page_size) - start / page_size) * page_size;
        i = j + 1;
    }
    total
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Amplification {
    pub useful_bytes: u64,
    pub charged_bytes: u64,
}

impl Amplification {
    pub fn ratio(&self) -> f64 {
        if self.useful_bytes == 0 {
            1.0
        } else {
            self.charged_bytes as f64 / self.useful_bytes as f64
        }
    }
}

/// Charged vs useful bytes for a trace of missing vertex records.
pub fn trace_amplification(misses: &[u32], record_bytes: u64, page_size: u64) -> Amplification {
    let mut ids = misses.to_vec();
    ids.sort_unstable();
    ids.dedup();
    Amplification {
        useful_bytes: ids.len() as u64 * record_bytes,
        charged_bytes: page_charge(&ids, record_bytes, page_size),
    }
}

/// Amplification of one cold pass over every partition's gather set.
/// Vertex granularity reads each missing record page-rounded; partition
/// granularity reads whole partitions sequentially, so charged equals
/// useful.
pub fn read_amplification_report(
    plan: &PartitionPlan,
    record_bytes: u64,
    config: &HierarchyConfig,
    granularity: CacheGranularity,
) -> Amplification {
    let mut out = Amplification::default();
    for gm in &plan.gather_maps {
        let a = match granularity {
            CacheGranularity::Vertex => trace_amplification(gm, record_bytes, config.page_size),
            _ => {
                let b = gm.len() as u64 * record_bytes;
                Amplification {
                    useful_bytes: b,
                    charged_bytes: b,
                }
            }
        };
        out.useful_bytes += a.useful_bytes;
        out.charged_bytes += a.charged_bytes;
    }
    out
}
