use super::config::{HierarchyConfig, PolicyKind, PolicySpec};
use super::ledger::{IoLedger, Phase};
use super::runtime::{simulate_epoch, ModelShape};
use super::time::stage_times;
use crate::error::{invalid, Result};
use crate::graph::CsrGraph;
use crate::partition::PartitionLabels;
use crate::train::{build_partition_plan, PartitionPlan};
use serde::Serialize;

/// A plan whose every partition has expansion ratio exactly `alpha`:
/// vertex `i` of partition `j` reads vertex `i` of partitions
/// `j+1 … j+alpha−1` (mod `partitions`).
pub fn exact_expansion_plan(partitions: usize, per_partition: usize, alpha: usize) -> Result<PartitionPlan> {
    if alpha == 0 || alpha > partitions || per_partition == 0 {
        return Err(invalid("need 1 ≤ alpha ≤ partitions and non-empty partitions"));
    }
    let n = partitions * per_partition;
    let mut edges = Vec::with_capacity(n * (alpha - 1));
    for j in 0..partitions {
        for i in 0..per_partition {
            for s in 1..alpha {
                let src = ((j + s) % partitions) * per_partition + i;
                edges.push((src as u32, (j * per_partition + i) as u32));
            }
        }
    }
    let graph = CsrGraph::from_edges(n, &edges)?;
    let labels = PartitionLabels::new((0..n).map(|v| (v / per_partition) as u32).collect(), partitions)?;
    build_partition_plan(&graph, &labels)
}

/// `a, a+step, …` up to `b` inclusive (within half a step).
pub fn sweep_ratios(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && a > 0.0 && b >= a) {
        return Err(invalid(format!("bad sweep {a}:{b}:{step}")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

/// Modeled time of the backward layers `≥ from_layer` of epoch 1.
pub fn backward_time(ledger: &IoLedger, config: &HierarchyConfig, from_layer: usize) -> f64 {
    stage_times(ledger, config)
        .iter()
        .filter(|((e, ph, l), _)| *e == 1 && *ph == Phase::Backward && *l >= from_layer)
        .map(|(_, t)| t.elapsed())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    /// `B_host / B_SSD`.
    pub ratio: f64,
    pub grinnder_time: f64,
    pub intermediate_time: f64,
    pub winner: PolicyKind,
}

/// Backward time of regathering (host ≥ 2D) vs intermediate snapshots
/// (host = 0) on an exact-α plan, as the host link speeds up relative to
/// storage. Compute is made free so only I/O decides.
pub fn crossover_sweep(alpha: usize, ratios: &[f64], base: &HierarchyConfig) -> Result<Vec<SweepPoint>> {
    let partitions = alpha.max(4);
    let plan = exact_expansion_plan(partitions, 64, alpha)?;
    let shape = ModelShape::uniform(64, 3);
    let d = plan.num_vertices as u64 * 64 * base.bytes_per_value;
    let mut cfg = HierarchyConfig {
        compute_rate: 1e30,
        ..base.clone()
    };
    cfg.host_capacity = 2 * d;
    let ours = simulate_epoch(&plan, &shape, &PolicySpec::new(PolicyKind::Grinnder), &cfg)?;
    cfg.host_capacity = 0;
    let theirs = simulate_epoch(&plan, &shape, &PolicySpec::new(PolicyKind::HongtuIntermediate), &cfg)?;
    Ok(ratios
        .iter()
        .map(|&ratio| {
            let at = HierarchyConfig {
                host_gpu_bandwidth: ratio * cfg.storage_bandwidth,
                ..cfg.clone()
            };
            let g = backward_time(&ours, &at, 2);
            let h = backward_time(&theirs, &at, 2);
            SweepPoint {
                ratio,
                grinnder_time: g,
                intermediate_time: h,
                winner: if g < h { PolicyKind::Grinnder } else { PolicyKind::HongtuIntermediate },
            }
        })
        .collect())
}

/// First ratio at which the winner differs from the first point's.
pub fn flip_ratio(points: &[SweepPoint]) -> Option<f64> {
    let first = points.first()?.winner;
    points.iter().find(|p| p.winner != first).map(|p| p.ratio)
}
