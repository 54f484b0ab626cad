//! Whole-graph training with no partitioning: the oracle the partitioned
//! engine is compared against. It shares only the dense kernels.

use super::layer::{relu, row_normalize, row_normalize_backward, softmax_cross_entropy, dropout_row};
use super::model::{AggregationMode, ModelState};
use super::trace::{EpochRecord, TrainTrace};
use crate::error::{Error, Result};
use crate::graph::{CsrGraph, LabeledDataset};
use crate::matrix::FeatureMatrix;

pub(crate) struct Monolithic {
    incoming: CsrGraph,
    out_degree: Vec<u32>,
}

impl Monolithic {
    pub(crate) fn new(graph: &CsrGraph) -> Self {
        Self {
            incoming: graph.transpose(),
            out_degree: (0..graph.num_vertices()).map(|v| graph.degree(v) as u32).collect(),
        }
    }

    fn coef(&self, mode: AggregationMode, v: usize, u: usize) -> f64 {
        mode.coefficient(self.incoming.degree(v) as u32, self.out_degree[u])
    }

    fn aggregate(&self, mode: AggregationMode, x: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(x.rows(), x.cols());
        for v in 0..x.rows() {
            let c = self.coef(mode, v, v);
            let row = out.row_mut(v);
            for (o, &a) in row.iter_mut().zip(x.row(v)) {
                *o = c * a;
            }
            for &u in self.incoming.neighbors(v) {
                let c = self.coef(mode, v, u as usize);
                for (o, &a) in row.iter_mut().zip(x.row(u as usize)) {
                    *o += c * a;
                }
            }
        }
        out
    }

    fn aggregate_transpose(&self, mode: AggregationMode, g: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(g.rows(), g.cols());
        for v in 0..g.rows() {
            let c = self.coef(mode, v, v);
            for (o, &a) in out.row_mut(v).iter_mut().zip(g.row(v)) {
                *o += c * a;
            }
            for &u in self.incoming.neighbors(v) {
                let c = self.coef(mode, v, u as usize);
                for (o, &a) in out.row_mut(u as usize).iter_mut().zip(g.row(v)) {
                    *o += c * a;
                }
            }
        }
        out
    }
}

fn mask_rows(m: &mut FeatureMatrix, model: &ModelState, epoch: usize, layer: usize) {
    let rate = model.config.dropout;
    if rate == 0.0 {
        return;
    }
    let cols = m.cols();
    for v in 0..m.rows() {
        let mask = dropout_row(model.config.seed, epoch, layer, v as u32, cols, rate);
        for (x, s) in m.row_mut(v).iter_mut().zip(mask) {
            *x *= s;
        }
    }
}

/// One whole-graph forward and backward pass.
pub(crate) struct Pass {
    pub loss: f64,
    pub accuracy: f64,
    pub weight_grads: Vec<FeatureMatrix>,
    /// Activation inputs (`norm(z)`) of every hidden layer.
    pub pre_activations: Vec<FeatureMatrix>,
}

pub(crate) fn forward_backward(
    mono: &Monolithic,
    data: &LabeledDataset,
    model: &ModelState,
    epoch: usize,
) -> Result<Pass> {
    let mode = model.config.aggregation;
    let layers = model.num_layers();
    let mut i0s = Vec::with_capacity(layers);
    let mut zs = Vec::with_capacity(layers);
    let mut ys = Vec::with_capacity(layers);
    let mut outs: Vec<FeatureMatrix> = Vec::with_capacity(layers);

    for l in 0..layers {
        let mut x = if l == 0 {
            data.features.clone()
        } else {
            outs[l - 1].clone()
        };
        mask_rows(&mut x, model, epoch, l);
        let i0 = mono.aggregate(mode, &x);
        let z = i0.matmul(&model.weights[l])?;
        let y = if model.config.row_norm { row_normalize(&z) } else { z.clone() };
        let a = if l + 1 == layers { y.clone() } else { relu(&y) };
        i0s.push(i0);
        zs.push(z);
        ys.push(y);
        outs.push(a);
    }

    let lo = softmax_cross_entropy(&outs[layers - 1], &data.labels, &data.train_mask)?;
    let mut grad = lo.grad;
    let mut weight_grads = vec![FeatureMatrix::zeros(0, 0); layers];
    for l in (0..layers).rev() {
        if l + 1 != layers {
            for (g, &a) in grad.as_mut_slice().iter_mut().zip(outs[l].as_slice()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let dz = if model.config.row_norm {
            row_normalize_backward(&zs[l], &ys[l], &grad)
        } else {
            grad
        };
        weight_grads[l] = i0s[l].t_matmul(&dz)?;
        if l == 0 {
            break;
        }
        let di0 = dz.matmul_t(&model.weights[l])?;
        let mut dx = mono.aggregate_transpose(mode, &di0);
        mask_rows(&mut dx, model, epoch, l);
        grad = dx;
    }
    ys.pop();
    Ok(Pass {
        loss: lo.loss,
        accuracy: lo.accuracy,
        weight_grads,
        pre_activations: ys,
    })
}

/// Full-graph gradient descent for `epochs` epochs. The trace records the
/// loss and training accuracy of each epoch's forward pass.
pub fn reference_train(
    data: &LabeledDataset,
    model: &ModelState,
    epochs: usize,
    lr: f64,
) -> Result<(ModelState, TrainTrace)> {
    data.validate()?;
    let mono = Monolithic::new(&data.graph);
    let mut model = model.clone();
    let mut trace = TrainTrace::default();
    for epoch in 1..=epochs {
        let pass = forward_backward(&mono, data, &model, epoch)?;
        if !pass.loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("loss = {}", pass.loss),
            });
        }
        model.weight_grads = pass.weight_grads;
        model.apply_gradients(lr)?;
        trace.records.push(EpochRecord {
            epoch,
            loss: pass.loss,
            train_acc: pass.accuracy,
        });
    }
    Ok((model, trace))
}
