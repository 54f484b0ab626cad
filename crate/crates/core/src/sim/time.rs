use super::config::HierarchyConfig;
use super::ledger::{IoLedger, Link, Phase};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTime {
    pub compute: f64,
    pub host_link: f64,
    pub storage: f64,
}

impl StageTime {
    /// I/O and compute overlap fully; the slowest resource sets the pace.
    pub fn elapsed(&self) -> f64 {
        self.compute.max(self.host_link).max(self.storage)
    }
}

/// Per `(epoch, phase, layer)` resource times. Storage time covers both
/// storage links, which share the device.
pub fn stage_times(ledger: &IoLedger, config: &HierarchyConfig) -> BTreeMap<(usize, Phase, usize), StageTime> {
    let mut out: BTreeMap<(usize, Phase, usize), StageTime> = BTreeMap::new();
    for t in &ledger.transfers {
        let s = out.entry((t.stage.epoch, t.stage.phase, t.stage.layer)).or_default();
        match t.link {
            Link::GpuHost => s.host_link += t.charged as f64 / config.host_gpu_bandwidth,
            Link::HostStorage | Link::GpuStorage => s.storage += t.charged as f64 / config.storage_bandwidth,
        }
    }
    for (stage, flops) in &ledger.compute {
        out.entry((stage.epoch, stage.phase, stage.layer)).or_default().compute += flops / config.compute_rate;
    }
    out
}

/// Sum of per-stage elapsed times.
pub fn modeled_time(ledger: &IoLedger, config: &HierarchyConfig) -> f64 {
    stage_times(ledger, config).values().map(StageTime::elapsed).sum()
}
