use super::config::{CacheGranularity, CacheMode, HierarchyConfig, PolicyKind, PolicySpec};
use super::formulas::{predicted_peak_memory, predicted_traffic, LinkBytes};
use super::ledger::{IoLedger, Link, Phase, Tier};
use crate::train::PartitionPlan;
use serde::Serialize;

/// One measured-vs-closed-form comparison. `layer` is 0 for whole-epoch
/// quantities such as tier peaks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleDelta {
    pub phase: String,
    pub layer: usize,
    pub quantity: String,
    pub measured: u64,
    pub predicted: u64,
}

impl OracleDelta {
    pub fn delta(&self) -> i64 {
        self.measured as i64 - self.predicted as i64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleReport {
    /// False when the closed forms do not describe this configuration
    /// (warm cache, vertex granularity); `deltas` is then empty.
    pub applicable: bool,
    pub deltas: Vec<OracleDelta>,
}

impl OracleReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &OracleDelta> {
        self.deltas.iter().filter(|d| d.delta() != 0)
    }

    pub fn ok(&self) -> bool {
        self.mismatches().next().is_none()
    }
}

fn measured(l: &IoLedger, epoch: usize, phase: Phase, layer: usize) -> LinkBytes {
    LinkBytes {
        gpu_host: l.phase_link_bytes(epoch, phase, layer, Link::GpuHost, false),
        host_storage: l.phase_link_bytes(epoch, phase, layer, Link::HostStorage, false),
        gpu_storage: l.phase_link_bytes(epoch, phase, layer, Link::GpuStorage, false),
    }
}

/// Compares the first epoch of `ledger` (produced with a uniform layer
/// width `width` and `layers` layers) against the closed-form traffic and
/// peak formulas. Storage reads of the cached policy are corrected by the
/// measured cache hits.
pub fn oracle_check(
    ledger: &IoLedger,
    plan: &PartitionPlan,
    width: usize,
    layers: usize,
    spec: &PolicySpec,
    config: &HierarchyConfig,
) -> OracleReport {
    if spec.cache_mode == CacheMode::Warm || spec.cache_granularity == CacheGranularity::Vertex {
        return OracleReport::default();
    }
    let kind = spec.kind;
    let alpha = plan.weighted_alpha();
    let d = plan.num_vertices as u64 * width as u64 * config.bytes_per_value;
    let pred = predicted_traffic(kind, alpha, d, layers, config.host_capacity);
    let mut deltas = Vec::new();
    let mut push = |phase: Phase, layer: usize, got: LinkBytes, mut want: LinkBytes| {
        if kind == PolicyKind::Grinnder {
            let hit = ledger.cache_stats(1, phase, layer).cache_hit_bytes();
            want.host_storage = (want.host_storage as i64 - hit) as u64;
        }
        for (link, m, p) in [
            (Link::GpuHost, got.gpu_host, want.gpu_host),
            (Link::HostStorage, got.host_storage, want.host_storage),
            (Link::GpuStorage, got.gpu_storage, want.gpu_storage),
        ] {
            deltas.push(OracleDelta {
                phase: phase.name().to_string(),
                layer,
                quantity: link.name().to_string(),
                measured: m,
                predicted: p,
            });
        }
    };
    for l in 1..=layers {
        push(Phase::Forward, l, measured(ledger, 1, Phase::Forward, l), pred.forward);
        let want = if l == 1 { pred.backward_first } else { pred.backward };
        push(Phase::Backward, l, measured(ledger, 1, Phase::Backward, l), want);
    }
    push(Phase::Loss, layers, measured(ledger, 1, Phase::Loss, layers), pred.loss);

    // The cached policy's peak form assumes room for the accumulator and one
    // resident layer.
    if kind != PolicyKind::Grinnder || config.host_capacity >= 2 * d {
        let peaks = predicted_peak_memory(kind, alpha, d, layers, config.host_capacity);
        for (tier, want) in [(Tier::Host, peaks.host), (Tier::Storage, peaks.storage)] {
            deltas.push(OracleDelta {
                phase: "epoch".into(),
                layer: 0,
                quantity: format!("peak_{}", tier.name()),
                measured: ledger.peak_residency(tier),
                predicted: want,
            });
        }
    }
    OracleReport { applicable: true, deltas }
}
