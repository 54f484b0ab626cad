//! Partition-at-a-time training driven by the hierarchy simulator.

use super::layer::{
    apply_dropout, backward_from_trace, forward_from_i0, layer_forward_trace, regather, scatter_accumulate,
    snapshot_backward, softmax_cross_entropy, BackwardOutput, CachedLayer,
};
use super::model::ModelState;
use super::plan::PartitionPlan;
use super::trace::{EpochRecord, TrainTrace};
use crate::error::{invalid, Error, Result};
use crate::graph::LabeledDataset;
use crate::matrix::FeatureMatrix;
use crate::sim::{Access, BackwardSource, Executor, HierarchyConfig, IoLedger, ModelShape, PolicySpec, Simulator};
use std::collections::HashMap;

/// Outcome of comparing regathered inputs against shadow snapshots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ShadowReport {
    /// Partition backward steps compared.
    pub compared: usize,
    /// Steps where the gathered input or `∇GA` differed in any bit.
    pub mismatched: usize,
}

struct TrainExecutor<'a> {
    data: &'a LabeledDataset,
    plan: &'a PartitionPlan,
    model: ModelState,
    /// `A^0 … A^L`, rows by global vertex id.
    acts: Vec<FeatureMatrix>,
    /// `∇A^{l+1}` while layer `l` runs backward.
    grad: FeatureMatrix,
    snapshots: HashMap<(usize, usize), FeatureMatrix>,
    parts: Vec<Option<BackwardOutput>>,
    shadow: bool,
    report: ShadowReport,
    loss: f64,
    accuracy: f64,
}

impl<'a> TrainExecutor<'a> {
    fn new(data: &'a LabeledDataset, plan: &'a PartitionPlan, model: ModelState, shadow: bool) -> Self {
        let n = data.graph.num_vertices();
        let dims = model.dims();
        let mut acts: Vec<FeatureMatrix> = dims.iter().map(|&d| FeatureMatrix::zeros(n, d)).collect();
        acts[0] = data.features.clone();
        Self {
            data,
            plan,
            model,
            acts,
            grad: FeatureMatrix::zeros(0, 0),
            snapshots: HashMap::new(),
            parts: vec![None; plan.num_partitions()],
            shadow,
            report: ShadowReport::default(),
            loss: 0.0,
            accuracy: 0.0,
        }
    }

    fn gathered(&self, epoch: usize, layer: usize, p: usize, access: &Access) -> Result<FeatureMatrix> {
        let cached = CachedLayer {
            activations: &self.acts[layer],
            resident: &access.resident,
        };
        let mut ga = regather(self.plan, p, &cached)?;
        let cfg = &self.model.config;
        apply_dropout(&mut ga, &self.plan.gather_maps[p], cfg.seed, epoch, layer, cfg.dropout);
        Ok(ga)
    }
}

impl Executor for TrainExecutor<'_> {
    fn forward(&mut self, epoch: usize, layer: usize, p: usize, access: &Access) -> Result<()> {
        let ga = self.gathered(epoch, layer, p, access)?;
        let trace = layer_forward_trace(layer, &ga, &self.plan.topologies[p], &self.model)?;
        let out = &mut self.acts[layer + 1];
        for (i, &v) in self.plan.targets[p].iter().enumerate() {
            out.row_mut(v as usize).copy_from_slice(trace.output.row(i));
        }
        match access.source {
            BackwardSource::GatherSnapshot => {
                self.snapshots.insert((layer, p), ga);
            }
            BackwardSource::IntermediateSnapshot => {
                self.snapshots.insert((layer, p), trace.i0);
            }
            BackwardSource::Regather if self.shadow => {
                self.snapshots.insert((layer, p), ga);
            }
            BackwardSource::Regather => {}
        }
        Ok(())
    }

    fn loss(&mut self, epoch: usize) -> Result<()> {
        let top = self.acts.last().expect("at least one layer");
        let lo = softmax_cross_entropy(top, &self.data.labels, &self.data.train_mask)?;
        if !lo.loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("loss = {}", lo.loss),
            });
        }
        self.loss = lo.loss;
        self.accuracy = lo.accuracy;
        self.grad = lo.grad;
        Ok(())
    }

    fn backward(&mut self, epoch: usize, layer: usize, p: usize, access: &Access) -> Result<()> {
        let targets = &self.plan.targets[p];
        let a_out = self.acts[layer + 1].gather_rows(targets)?;
        let grad_out = self.grad.gather_rows(targets)?;
        let taken = self.snapshots.remove(&(layer, p));
        let missing = || Error::CacheProtocol(format!("no snapshot for layer {layer} partition {p}"));
        let out = match access.source {
            BackwardSource::Regather => {
                let ga = self.gathered(epoch, layer, p, access)?;
                let out = snapshot_backward(layer, p, &a_out, &grad_out, &ga, self.plan, &self.model)?;
                if self.shadow {
                    let snap = taken.ok_or_else(missing)?;
                    let twin = snapshot_backward(layer, p, &a_out, &grad_out, &snap, self.plan, &self.model)?;
                    let same_grad = match (&out.grad_ga, &twin.grad_ga) {
                        (Some(a), Some(b)) => a.bitwise_eq(b),
                        (None, None) => true,
                        _ => false,
                    };
                    self.report.compared += 1;
                    if !(ga.bitwise_eq(&snap) && same_grad) {
                        self.report.mismatched += 1;
                    }
                }
                out
            }
            BackwardSource::GatherSnapshot => {
                let snap = taken.ok_or_else(missing)?;
                snapshot_backward(layer, p, &a_out, &grad_out, &snap, self.plan, &self.model)?
            }
            BackwardSource::IntermediateSnapshot => {
                let i0 = taken.ok_or_else(missing)?;
                let topo = &self.plan.topologies[p];
                let trace = forward_from_i0(layer, i0, &self.model)?;
                backward_from_trace(layer, &trace, &a_out, &grad_out, topo, &self.model, layer > 0)?
            }
        };
        self.parts[p] = Some(out);
        Ok(())
    }

    fn end_backward_layer(&mut self, epoch: usize, layer: usize) -> Result<()> {
        let mut wg: Option<FeatureMatrix> = None;
        let dims = self.model.dims();
        let mut acc = (layer > 0).then(|| FeatureMatrix::zeros(self.plan.num_vertices, dims[layer]));
        for (p, slot) in self.parts.iter_mut().enumerate() {
            let Some(out) = slot.take() else { continue };
            match &mut wg {
                None => wg = Some(out.weight_grad),
                Some(sum) => sum.add_assign(&out.weight_grad)?,
            }
            if let (Some(acc), Some(g)) = (acc.as_mut(), out.grad_ga.as_ref()) {
                scatter_accumulate(g, &self.plan.gather_maps[p], acc)?;
            }
        }
        self.model.weight_grads[layer] = wg.unwrap_or_else(|| FeatureMatrix::zeros(dims[layer], dims[layer + 1]));
        if let Some(mut acc) = acc {
            let cfg = &self.model.config;
            let all: Vec<u32> = (0..self.plan.num_vertices as u32).collect();
            apply_dropout(&mut acc, &all, cfg.seed, epoch, layer, cfg.dropout);
            self.grad = acc;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    data: &LabeledDataset,
    plan: &PartitionPlan,
    model: &ModelState,
    epochs: usize,
    lr: f64,
    hierarchy: &HierarchyConfig,
    policy: &PolicySpec,
    shadow: bool,
) -> Result<(ModelState, TrainTrace, IoLedger, ShadowReport)> {
    data.validate()?;
    if plan.num_vertices != data.graph.num_vertices() || plan.num_edges != data.graph.num_edges() {
        return Err(invalid("plan was not built from this dataset's graph"));
    }
    if model.dims()[0] != data.features.cols() {
        return Err(Error::Shape(format!(
            "model input width {} but features have {} columns",
            model.dims()[0],
            data.features.cols()
        )));
    }
    let shape = ModelShape::new(model.dims());
    let mut sim = Simulator::new(plan, shape, policy.clone(), hierarchy.clone())?;
    let mut exec = TrainExecutor::new(data, plan, model.clone(), shadow);
    let mut trace = TrainTrace::default();
    for epoch in 1..=epochs {
        sim.run_epoch(epoch, &mut exec)?;
        exec.model.apply_gradients(lr)?;
        trace.records.push(EpochRecord {
            epoch,
            loss: exec.loss,
            train_acc: exec.accuracy,
        });
    }
    let report = exec.report;
    Ok((exec.model, trace, sim.finish(), report))
}

/// Trains `epochs` epochs one partition at a time under `policy`, returning
/// the final model, the loss trace and the I/O ledger of the whole run.
/// Per-partition weight and input gradients are summed in ascending
/// partition order, so the result does not depend on the schedule.
pub fn partitioned_train(
    data: &LabeledDataset,
    plan: &PartitionPlan,
    model: &ModelState,
    epochs: usize,
    lr: f64,
    hierarchy: &HierarchyConfig,
    policy: &PolicySpec,
) -> Result<(ModelState, TrainTrace, IoLedger)> {
    let (m, t, l, _) = run(data, plan, model, epochs, lr, hierarchy, policy, false)?;
    Ok((m, t, l))
}

/// Regathering run that also keeps the snapshots a snapshot engine would
/// store and compares inputs and input gradients bit for bit.
pub fn regather_identity_check(
    data: &LabeledDataset,
    plan: &PartitionPlan,
    model: &ModelState,
    epochs: usize,
    lr: f64,
) -> Result<ShadowReport> {
    let policy = PolicySpec::new(crate::sim::PolicyKind::Grinnder);
    let (_, _, _, report) = run(data, plan, model, epochs, lr, &HierarchyConfig::unlimited(), &policy, true)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CsrGraph;
    use crate::partition::PartitionLabels;
    use crate::sim::PolicyKind;
    use crate::train::model::{AggregationMode, ModelConfig};
    use crate::train::plan::build_partition_plan;
    use crate::train::reference::reference_train;

    fn ring(n: usize) -> LabeledDataset {
        let edges: Vec<(u32, u32)> = (0..n as u32).map(|v| (v, (v + 1) % n as u32)).chain([(0, 5), (3, 9)]).collect();
        let g = CsrGraph::from_edges(n, &edges).unwrap();
        let f = FeatureMatrix::from_fn(n, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let labels = (0..n as u32).map(|v| v % 3).collect();
        let mask = (0..n).map(|v| v % 4 != 0).collect();
        LabeledDataset::new(g, f, labels, 3, mask).unwrap()
    }

    fn model(layers: usize, aggregation: AggregationMode, row_norm: bool) -> ModelState {
        let cfg = ModelConfig {
            num_layers: layers,
            hidden_dim: 4,
            aggregation,
            row_norm,
            seed: 11,
            ..Default::default()
        };
        ModelState::init(cfg, 3, 3).unwrap()
    }

    fn labels(n: usize, p: usize) -> PartitionLabels {
        PartitionLabels::new((0..n).map(|v| (v * 7 % p) as u32).collect(), p).unwrap()
    }

    #[test]
    fn single_partition_is_bitwise_reference() {
        let data = ring(12);
        let m = model(3, AggregationMode::MeanSelfLoop, false);
        let plan = build_partition_plan(&data.graph, &PartitionLabels::single(12)).unwrap();
        let (a, ta, _) = partitioned_train(
            &data,
            &plan,
            &m,
            4,
            0.1,
            &HierarchyConfig::unlimited(),
            &PolicySpec::default(),
        )
        .unwrap();
        let (b, tb) = reference_train(&data, &m, 4, 0.1).unwrap();
        assert_eq!(ta, tb);
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!(x.bitwise_eq(y));
        }
    }

    #[test]
    fn every_policy_matches_reference() {
        let data = ring(12);
        for agg in [AggregationMode::MeanSelfLoop, AggregationMode::SymmetricNorm] {
            for row_norm in [false, true] {
                let m = model(3, agg, row_norm);
                let (want, wt) = reference_train(&data, &m, 3, 0.05).unwrap();
                let plan = build_partition_plan(&data.graph, &labels(12, 4)).unwrap();
                for kind in PolicyKind::ALL {
                    let (got, gt, _) = partitioned_train(
                        &data,
                        &plan,
                        &m,
                        3,
                        0.05,
                        &HierarchyConfig::unlimited(),
                        &PolicySpec::new(kind),
                    )
                    .unwrap();
                    assert!(got.max_weight_diff(&want) < 1e-12, "{kind:?} {agg:?} {row_norm}");
                    assert!(gt.max_loss_deviation(&wt) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dropout_matches_reference() {
        let data = ring(12);
        let mut m = model(2, AggregationMode::MeanSelfLoop, false);
        m.config.dropout = 0.3;
        let plan = build_partition_plan(&data.graph, &labels(12, 3)).unwrap();
        let (got, _, _) =
            partitioned_train(&data, &plan, &m, 3, 0.05, &HierarchyConfig::unlimited(), &PolicySpec::default()).unwrap();
        let (want, _) = reference_train(&data, &m, 3, 0.05).unwrap();
        assert!(got.max_weight_diff(&want) < 1e-12);
    }

    #[test]
    fn shadow_snapshots_agree() {
        let data = ring(12);
        let m = model(3, AggregationMode::SymmetricNorm, true);
        let plan = build_partition_plan(&data.graph, &labels(12, 4)).unwrap();
        let r = regather_identity_check(&data, &plan, &m, 2, 0.05).unwrap();
        assert_eq!(r.compared, 2 * 3 * 4);
        assert_eq!(r.mismatched, 0);
    }

    #[test]
    fn rejects_foreign_plan() {
        let data = ring(12);
        let other = ring(10);
        let plan = build_partition_plan(&other.graph, &PartitionLabels::single(10)).unwrap();
        let m = model(2, AggregationMode::MeanSelfLoop, false);
        assert!(partitioned_train(&data, &plan, &m, 1, 0.1, &HierarchyConfig::unlimited(), &PolicySpec::default())
            .is_err());
    }
}
