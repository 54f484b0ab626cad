//! Closed-form traffic and peak-memory predictions per policy, used as the
//! oracle for the simulator's ledgers.

use super::config::PolicyKind;
use serde::Serialize;

/// Bytes per link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LinkBytes {
    pub gpu_host: u64,
    pub host_storage: u64,
    pub gpu_storage: u64,
}

/// Per-layer traffic of one epoch, by phase. `backward` covers layers 2..L;
/// `backward_first` is layer 1, which produces no input gradient.
///
/// For `Grinnder`, `host_storage` is the value before cache hits: the
/// simulator's bytes equal it minus the phase's `cache_hit_bytes`.
/// Topology transfers are not included.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PhaseTraffic {
    pub forward: LinkBytes,
    pub loss: LinkBytes,
    pub backward: LinkBytes,
    pub backward_first: LinkBytes,
}

/// Peak residency per tier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TierPeaks {
    pub host: u64,
    pub storage: u64,
}

fn scaled(alpha: f64, d: u64) -> u64 {
    (alpha * d as f64).round() as u64
}

fn spill(traffic: u64, window: u64) -> u64 {
    traffic.saturating_sub(window)
}

/// Host bytes a swap-based policy keeps pinned for the whole epoch.
fn pinned(policy: PolicyKind, d: u64, layers: usize) -> u64 {
    match policy {
        PolicyKind::HongtuIntermediate => d * layers as u64,
        _ => 0,
    }
}

/// Per-layer link bytes for a model whose layers all move `d` bytes per
/// whole-graph activation, at expansion ratio `alpha` (whole-graph
/// `Σ|GA_p| / |V|`).
pub fn predicted_traffic(policy: PolicyKind, alpha: f64, d: u64, layers: usize, host_capacity: u64) -> PhaseTraffic {
    let ad = scaled(alpha, d);
    let window = host_capacity.saturating_sub(pinned(policy, d, layers));
    let via_host = |gpu_host: u64| LinkBytes {
        gpu_host,
        host_storage: spill(gpu_host, window),
        gpu_storage: 0,
    };
    let direct = |gpu_storage: u64| LinkBytes {
        gpu_storage,
        ..Default::default()
    };
    match policy {
        PolicyKind::Grinnder => PhaseTraffic {
            forward: LinkBytes {
                gpu_host: ad,
                host_storage: ad,
                gpu_storage: d,
            },
            loss: direct(d),
            backward: LinkBytes {
                gpu_host: 2 * ad + 2 * d,
                host_storage: ad + 3 * d,
                gpu_storage: 0,
            },
            backward_first: LinkBytes {
                gpu_host: ad + 2 * d,
                host_storage: ad + 2 * d,
                gpu_storage: 0,
            },
        },
        PolicyKind::HongtuSwap => PhaseTraffic {
            forward: via_host(2 * ad + d),
            loss: via_host(d),
            backward: via_host(2 * ad + 2 * d),
            backward_first: via_host(ad + 2 * d),
        },
        PolicyKind::HongtuIntermediate => PhaseTraffic {
            forward: via_host(ad + 2 * d),
            loss: via_host(d),
            backward: via_host(ad + 3 * d),
            backward_first: via_host(3 * d),
        },
        PolicyKind::Naive => PhaseTraffic {
            forward: direct(2 * ad + 3 * d),
            loss: direct(d),
            backward: direct(2 * ad + 3 * d),
            backward_first: direct(ad + 3 * d),
        },
    }
}

/// Peak host and storage residency over one epoch, excluding the input
/// features and topology. `Grinnder` assumes `host_capacity ≥ 2d`.
pub fn predicted_peak_memory(policy: PolicyKind, alpha: f64, d: u64, layers: usize, host_capacity: u64) -> TierPeaks {
    let l = layers as u64;
    let ad = scaled(alpha, d);
    // The loss gradient, plus an accumulator for the next gradient when
    // there is a layer below the top one.
    let grads = if layers >= 2 { 2 * d } else { d };
    let swapped = |demand: u64| {
        let host = demand.min(host_capacity);
        TierPeaks {
            host,
            storage: demand - host,
        }
    };
    match policy {
        PolicyKind::Grinnder => TierPeaks {
            host: if layers >= 2 { 2 * d } else { d },
            storage: d * l + d,
        },
        PolicyKind::HongtuSwap => swapped((ad + d) * l + grads),
        PolicyKind::HongtuIntermediate => swapped(2 * d * l + grads),
        PolicyKind::Naive => TierPeaks {
            host: 0,
            storage: (ad + 3 * d) * l + grads,
        },
    }
}

/// Host-to-storage bandwidth ratio above which regathering backward beats
/// intermediate snapshots: `2(α+1)/(α+3)`.
pub fn crossover_threshold(alpha: f64) -> f64 {
    2.0 * (alpha + 1.0) / (alpha + 3.0)
}

/// Gather bytes shipped for one partition: `α_p · |H| · targets · b`.
pub fn per_partition_traffic(alpha_p: f64, hidden: usize, targets: usize, bytes_per_value: u64) -> u64 {
    (alpha_p * hidden as f64 * targets as f64 * bytes_per_value as f64).round() as u64
}
