//! Per-partition layer kernels. Layer indices here are 0-based positions in
//! `ModelState::weights`; layer `l` reads activations `A^l` and writes
//! `A^{l+1}`.

use super::model::{AggregationMode, ModelState};
use super::plan::{LocalTopology, PartitionPlan};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Keeps row normalization finite for all-zero rows.
pub const ROW_NORM_EPS: f64 = 1e-12;

fn check_rows(what: &str, m: &FeatureMatrix, rows: usize) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::Shape(format!("{what}: {} rows, expected {rows}", m.rows())));
    }
    Ok(())
}

/// `I0[t] = c_tt·x[self] + Σ_u c_tu·x[u]`, self term first, then in-neighbors
/// in topology order.
pub fn aggregate(
    topo: &LocalTopology,
    mode: AggregationMode,
    input: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    check_rows("aggregate input", input, topo.source_out_degree.len())?;
    let d = input.cols();
    let mut out = FeatureMatrix::zeros(topo.num_targets(), d);
    if d == 0 {
        return Ok(out);
    }
    par::for_each_chunk_mut(out.as_mut_slice(), d, |t, orow| {
        let deg = topo.target_in_degree[t];
        let s = topo.self_rows[t] as usize;
        let c = mode.coefficient(deg, topo.source_out_degree[s]);
        for (o, &x) in orow.iter_mut().zip(input.row(s)) {
            *o = c * x;
        }
        for &u in topo.in_rows(t) {
            let c = mode.coefficient(deg, topo.source_out_degree[u as usize]);
            for (o, &x) in orow.iter_mut().zip(input.row(u as usize)) {
                *o += c * x;
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`aggregate`]: scatters target gradients back onto gather rows,
/// visiting targets ascending and terms in forward order.
pub fn aggregate_transpose(
    topo: &LocalTopology,
    mode: AggregationMode,
    grad: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    check_rows("aggregate_transpose grad", grad, topo.num_targets())?;
    let mut out = FeatureMatrix::zeros(topo.source_out_degree.len(), grad.cols());
    for t in 0..topo.num_targets() {
        let deg = topo.target_in_degree[t];
        let g = grad.row(t);
        let s = topo.self_rows[t] as usize;
        let c = mode.coefficient(deg, topo.source_out_degree[s]);
        for (o, &x) in out.row_mut(s).iter_mut().zip(g) {
            *o += c * x;
        }
        for &u in topo.in_rows(t) {
            let c = mode.coefficient(deg, topo.source_out_degree[u as usize]);
            for (o, &x) in out.row_mut(u as usize).iter_mut().zip(g) {
                *o += c * x;
            }
        }
    }
    Ok(out)
}

/// `y = z / sqrt(|z|² + eps)` per row.
pub fn row_normalize(z: &FeatureMatrix) -> FeatureMatrix {
    let mut y = z.clone();
    let d = z.cols();
    if d == 0 {
        return y;
    }
    par::for_each_chunk_mut(y.as_mut_slice(), d, |_, row| {
        let s = (row.iter().map(|v| v * v).sum::<f64>() + ROW_NORM_EPS).sqrt();
        row.iter_mut().for_each(|v| *v /= s);
    });
    y
}

/// Gradient through [`row_normalize`]: `dz = (dy − y·⟨y, dy⟩) / s`.
pub fn row_normalize_backward(z: &FeatureMatrix, y: &FeatureMatrix, dy: &FeatureMatrix) -> FeatureMatrix {
    let d = z.cols();
    let mut dz = dy.clone();
    if d == 0 {
        return dz;
    }
    par::for_each_chunk_mut(dz.as_mut_slice(), d, |r, row| {
        let zr = z.row(r);
        let yr = y.row(r);
        let s = (zr.iter().map(|v| v * v).sum::<f64>() + ROW_NORM_EPS).sqrt();
        let dot: f64 = yr.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
        for (g, &yy) in row.iter_mut().zip(yr) {
            *g = (*g - yy * dot) / s;
        }
    });
    dz
}

pub fn relu(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Intermediates of one layer over one partition's targets.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// Aggregated input.
    pub i0: FeatureMatrix,
    /// `I0 · W`.
    pub z: FeatureMatrix,
    /// `z` after the optional row normalization (the activation input).
    pub pre_activation: FeatureMatrix,
    pub output: FeatureMatrix,
}

pub(crate) fn is_final(model: &ModelState, layer: usize) -> bool {
    layer + 1 == model.num_layers()
}

/// Forward pass from a pre-aggregated input.
pub(crate) fn forward_from_i0(layer: usize, i0: FeatureMatrix, model: &ModelState) -> Result<LayerTrace> {
    let z = i0.matmul(&model.weights[layer])?;
    let pre_activation = if model.config.row_norm {
        row_normalize(&z)
    } else {
        z.clone()
    };
    let output = if is_final(model, layer) {
        pre_activation.clone()
    } else {
        relu(&pre_activation)
    };
    Ok(LayerTrace {
        i0,
        z,
        pre_activation,
        output,
    })
}

pub fn layer_forward_trace(
    layer: usize,
    input: &FeatureMatrix,
    topo: &LocalTopology,
    model: &ModelState,
) -> Result<LayerTrace> {
    if layer >= model.num_layers() {
        return Err(Error::Shape(format!("layer {layer} of {}", model.num_layers())));
    }
    if input.cols() != model.weights[layer].rows() {
        return Err(Error::Shape(format!(
            "layer {layer} expects {} input columns, got {}",
            model.weights[layer].rows(),
            input.cols()
        )));
    }
    let i0 = aggregate(topo, model.config.aggregation, input)?;
    forward_from_i0(layer, i0, model)
}

/// `act(norm(agg(input) · W))` over the topology's targets; the final layer
/// skips the activation.
pub fn layer_forward(
    layer: usize,
    input: &FeatureMatrix,
    topo: &LocalTopology,
    model: &ModelState,
) -> Result<FeatureMatrix> {
    Ok(layer_forward_trace(layer, input, topo, model)?.output)
}

/// Result of one partition's backward step.
#[derive(Clone, Debug)]
pub struct BackwardOutput {
    /// Gradient w.r.t. the gathered input; `None` for the first layer.
    pub grad_ga: Option<FeatureMatrix>,
    pub weight_grad: FeatureMatrix,
}

/// Backward from recomputed intermediates: `dY = dA ⊙ [A > 0]` (hidden
/// layers), then through the normalization, then `∇W = I0ᵀ dZ` and
/// `∇GA = aggᵀ(dZ Wᵀ)`.
pub(crate) fn backward_from_trace(
    layer: usize,
    trace: &LayerTrace,
    a_out: &FeatureMatrix,
    grad_out: &FeatureMatrix,
    topo: &LocalTopology,
    model: &ModelState,
    need_input_grad: bool,
) -> Result<BackwardOutput> {
    let n = topo.num_targets();
    check_rows("A_out", a_out, n)?;
    check_rows("grad_out", grad_out, n)?;
    let mut dy = grad_out.clone();
    if !is_final(model, layer) {
        for (g, &a) in dy.as_mut_slice().iter_mut().zip(a_out.as_slice()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
    }
    let dz = if model.config.row_norm {
        row_normalize_backward(&trace.z, &trace.pre_activation, &dy)
    } else {
        dy
    };
    let weight_grad = trace.i0.t_matmul(&dz)?;
    let grad_ga = if need_input_grad {
        let di0 = dz.matmul_t(&model.weights[layer])?;
        Some(aggregate_transpose(topo, model.config.aggregation, &di0)?)
    } else {
        None
    };
    Ok(BackwardOutput {
        grad_ga,
        weight_grad,
    })
}

/// Previous-layer activations as the host cache currently holds them.
pub struct CachedLayer<'a> {
    /// Rows indexed by global vertex id.
    pub activations: &'a FeatureMatrix,
    /// Which partitions' rows are resident.
    pub resident: &'a [bool],
}

/// Reconstructs `GA_p` from cached activations. Fails if any dependency
/// partition is not resident.
pub fn regather(plan: &PartitionPlan, partition: usize, cached: &CachedLayer) -> Result<FeatureMatrix> {
    for &(q, _) in &plan.dependencies[partition] {
        if !cached.resident.get(q as usize).copied().unwrap_or(false) {
            return Err(Error::CacheProtocol(format!(
                "partition {partition} needs partition {q}, which is not cached"
            )));
        }
    }
    cached.activations.gather_rows(&plan.gather_maps[partition])
}

/// Backward of one partition that regathers its input from `cached` and
/// recomputes `I0` and the normalized pre-activation before any gradient
/// math. `layer` is 0-based; no input gradient is produced for layer 0.
pub fn regather_backward(
    layer: usize,
    partition: usize,
    a_out: &FeatureMatrix,
    grad_out: &FeatureMatrix,
    cached: &CachedLayer,
    plan: &PartitionPlan,
    model: &ModelState,
) -> Result<BackwardOutput> {
    let ga = regather(plan, partition, cached)?;
    snapshot_backward(layer, partition, a_out, grad_out, &ga, plan, model)
}

/// Same math as [`regather_backward`] from a stored copy of `GA_p`.
pub fn snapshot_backward(
    layer: usize,
    partition: usize,
    a_out: &FeatureMatrix,
    grad_out: &FeatureMatrix,
    snapshot: &FeatureMatrix,
    plan: &PartitionPlan,
    model: &ModelState,
) -> Result<BackwardOutput> {
    let topo = &plan.topologies[partition];
    let trace = layer_forward_trace(layer, snapshot, topo, model)?;
    backward_from_trace(layer, &trace, a_out, grad_out, topo, model, layer > 0)
}

/// `global[map[i]] += grad[i]` row by row, ascending `i`.
pub fn scatter_accumulate(grad_ga: &FeatureMatrix, gather_map: &[u32], global: &mut FeatureMatrix) -> Result<()> {
    check_rows("scatter grad", grad_ga, gather_map.len())?;
    if grad_ga.cols() != global.cols() {
        return Err(Error::Shape("scatter column mismatch".into()));
    }
    for (i, &g) in gather_map.iter().enumerate() {
        if g as usize >= global.rows() {
            return Err(Error::Shape(format!("scatter to row {g} of {}", global.rows())));
        }
        for (o, &x) in global.row_mut(g as usize).iter_mut().zip(grad_ga.row(i)) {
            *o += x;
        }
    }
    Ok(())
}

/// Inverted-dropout scale factors for one input row, a pure function of
/// `(seed, epoch, layer, vertex)`.
pub fn dropout_row(seed: u64, epoch: usize, layer: usize, vertex: u32, cols: usize, rate: f64) -> Vec<f64> {
    let key = seed
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (layer as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (vertex as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let keep = 1.0 / (1.0 - rate);
    (0..cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Multiplies each row of `m` (row `i` belongs to `vertices[i]`) by its
/// dropout mask.
pub fn apply_dropout(m: &mut FeatureMatrix, vertices: &[u32], seed: u64, epoch: usize, layer: usize, rate: f64) {
    if rate == 0.0 {
        return;
    }
    let cols = m.cols();
    for (i, &v) in vertices.iter().enumerate() {
        let mask = dropout_row(seed, epoch, layer, v, cols, rate);
        for (x, s) in m.row_mut(i).iter_mut().zip(mask) {
            *x *= s;
        }
    }
}

/// Loss summary over the training vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub accuracy: f64,
    /// `(softmax − onehot) / n_train` on training rows, zero elsewhere.
    pub grad: FeatureMatrix,
}

/// Mean softmax cross-entropy over `mask`; per-vertex terms are summed in
/// ascending vertex order.
pub fn softmax_cross_entropy(logits: &FeatureMatrix, labels: &[u32], mask: &[bool]) -> Result<LossOutput> {
    check_rows("logits", logits, labels.len())?;
    let n_train = mask.iter().filter(|&&m| m).count();
    let mut grad = FeatureMatrix::zeros(logits.rows(), logits.cols());
    if n_train == 0 {
        return Ok(LossOutput {
            loss: 0.0,
            accuracy: 0.0,
            grad,
        });
    }
    let scale = 1.0 / n_train as f64;
    let mut total = 0.0;
    let mut correct = 0usize;
    for v in 0..logits.rows() {
        if !mask[v] {
            continue;
        }
        let row = logits.row(v);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let label = labels[v] as usize;
        total += sum.ln() + max - row[label];
        let mut best = 0;
        for (c, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
        for (c, g) in grad.row_mut(v).iter_mut().enumerate() {
            let p = (row[c] - max).exp() / sum;
            *g = (p - if c == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok(LossOutput {
        loss: total * scale,
        accuracy: correct as f64 / n_train as f64,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CsrGraph;
    use crate::partition::PartitionLabels;
    use crate::train::model::ModelConfig;
    use crate::train::plan::build_partition_plan;

    fn whole(g: &CsrGraph) -> PartitionPlan {
        build_partition_plan(g, &PartitionLabels::single(g.num_vertices())).unwrap()
    }

    fn model(weights: Vec<FeatureMatrix>, row_norm: bool) -> ModelState {
        let cfg = ModelConfig {
            num_layers: weights.len(),
            hidden_dim: weights[0].cols(),
            row_norm,
            ..Default::default()
        };
        ModelState::from_weights(cfg, weights).unwrap()
    }

    #[test]
    fn isolated_vertex_identity_weight_is_relu() {
        let g = CsrGraph::from_edges(1, &[]).unwrap();
        let plan = whole(&g);
        let x = FeatureMatrix::from_vec(1, 3, vec![-1.0, 0.5, 2.0]).unwrap();
        let m = model(vec![FeatureMatrix::identity(3), FeatureMatrix::identity(3)], false);
        let out = layer_forward(0, &x, &plan.topologies[0], &m).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.5, 2.0]);
    }

    #[test]
    fn mean_of_self_and_sources() {
        // a=0 reads b=1 and g=2.
        let g = CsrGraph::from_edges(3, &[(1, 0), (2, 0)]).unwrap();
        let plan = whole(&g);
        let x = FeatureMatrix::from_vec(3, 2, vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]).unwrap();
        let i0 = aggregate(&plan.topologies[0], AggregationMode::MeanSelfLoop, &x).unwrap();
        assert!((i0.get(0, 0) - 21.0 / 3.0).abs() < 1e-12);
        assert!((i0.get(0, 1) - 42.0 / 3.0).abs() < 1e-12);
        assert_eq!(i0.row(1), &[4.0, 8.0]);
    }

    #[test]
    fn zero_weights_zero_output() {
        let g = CsrGraph::from_undirected_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let plan = whole(&g);
        let x = FeatureMatrix::from_fn(4, 2, |r, c| (r + c) as f64);
        let m = model(vec![FeatureMatrix::zeros(2, 2)], false);
        let out = layer_forward(0, &x, &plan.topologies[0], &m).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = CsrGraph::from_edges(2, &[(0, 1)]).unwrap();
        let plan = whole(&g);
        let m = model(vec![FeatureMatrix::identity(2)], false);
        assert!(layer_forward(0, &FeatureMatrix::zeros(3, 2), &plan.topologies[0], &m).is_err());
        assert!(layer_forward(0, &FeatureMatrix::zeros(2, 3), &plan.topologies[0], &m).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = CsrGraph::from_undirected_edges(5, &[(0, 1), (1, 2), (2, 3), (0, 4), (3, 4)]).unwrap();
        let plan = whole(&g);
        let topo = &plan.topologies[0];
        for mode in [AggregationMode::MeanSelfLoop, AggregationMode::SymmetricNorm] {
            let x = FeatureMatrix::from_fn(5, 3, |r, c| ((r * 3 + c) as f64).sin());
            let y = FeatureMatrix::from_fn(5, 3, |r, c| ((r + 7 * c) as f64).cos());
            let ax = aggregate(topo, mode, &x).unwrap();
            let aty = aggregate_transpose(topo, mode, &y).unwrap();
            let lhs: f64 = ax.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.as_slice().iter().zip(aty.as_slice()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_path_graph_hand_gradient() {
        // Path 0-1-2, single linear layer with 1x1 weight w, mean aggregation.
        // I0 = M x with M = [[1/2,1/2,0],[1/3,1/3,1/3],[0,1/2,1/2]].
        // For upstream g: ∇W = Σ_t I0_t g_t, ∇x = w · Mᵀ g.
        let g = CsrGraph::from_undirected_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let plan = whole(&g);
        let w = 1.5;
        let m = model(vec![FeatureMatrix::from_vec(1, 1, vec![w]).unwrap()], false);
        let x = [2.0, -1.0, 4.0];
        let up = [0.3, -0.7, 1.1];
        let mm = [[0.5, 0.5, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.0, 0.5, 0.5]];
        let i0: Vec<f64> = (0..3).map(|t| (0..3).map(|u| mm[t][u] * x[u]).sum()).collect();
        let dw: f64 = (0..3).map(|t| i0[t] * up[t]).sum();
        let dx: Vec<f64> = (0..3).map(|u| w * (0..3).map(|t| mm[t][u] * up[t]).sum::<f64>()).collect();

        let xm = FeatureMatrix::from_vec(3, 1, x.to_vec()).unwrap();
        let a_out = layer_forward(0, &xm, &plan.topologies[0], &m).unwrap();
        let gm = FeatureMatrix::from_vec(3, 1, up.to_vec()).unwrap();
        let trace = layer_forward_trace(0, &xm, &plan.topologies[0], &m).unwrap();
        let out = backward_from_trace(0, &trace, &a_out, &gm, &plan.topologies[0], &m, true).unwrap();
        assert!((out.weight_grad.get(0, 0) - dw).abs() < 1e-12);
        let gga = out.grad_ga.unwrap();
        for u in 0..3 {
            assert!((gga.get(u, 0) - dx[u]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let g = CsrGraph::from_undirected_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let plan = whole(&g);
        let m = model(
            vec![
                FeatureMatrix::from_fn(2, 3, |r, c| (r + c) as f64 - 1.0),
                FeatureMatrix::from_fn(3, 2, |r, c| (r * c) as f64 + 0.5),
            ],
            true,
        );
        let x = FeatureMatrix::from_fn(4, 3, |r, c| (r + 2 * c) as f64 * 0.1);
        let a = FeatureMatrix::from_fn(4, 2, |_, _| 1.0);
        let resident = [true];
        let cached = CachedLayer {
            activations: &x,
            resident: &resident,
        };
        let out = regather_backward(1, 0, &a, &FeatureMatrix::zeros(4, 2), &cached, &plan, &m).unwrap();
        assert!(out.weight_grad.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.grad_ga.unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_partition_is_protocol_violation() {
        let g = CsrGraph::from_undirected_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let l = PartitionLabels::new(vec![0, 0, 1, 1], 2).unwrap();
        let plan = build_partition_plan(&g, &l).unwrap();
        let x = FeatureMatrix::zeros(4, 2);
        let resident = [true, false];
        let cached = CachedLayer {
            activations: &x,
            resident: &resident,
        };
        assert!(matches!(regather(&plan, 0, &cached), Err(Error::CacheProtocol(_))));
        let resident = [true, true];
        let cached = CachedLayer {
            activations: &x,
            resident: &resident,
        };
        assert!(regather(&plan, 0, &cached).is_ok());
    }

    #[test]
    fn scatter_shared_vertex_sums() {
        let mut global = FeatureMatrix::zeros(3, 1);
        let a = FeatureMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let b = FeatureMatrix::from_vec(2, 1, vec![10.0, 20.0]).unwrap();
        scatter_accumulate(&a, &[0, 2], &mut global).unwrap();
        scatter_accumulate(&b, &[2, 1], &mut global).unwrap();
        assert_eq!(global.as_slice(), &[1.0, 20.0, 12.0]);
    }

    #[test]
    fn row_norm_backward_matches_numeric() {
        let z = FeatureMatrix::from_vec(1, 3, vec![0.3, -1.2, 0.7]).unwrap();
        let dy = FeatureMatrix::from_vec(1, 3, vec![0.5, 0.1, -0.4]).unwrap();
        let y = row_normalize(&z);
        let dz = row_normalize_backward(&z, &y, &dy);
        let f = |zz: &FeatureMatrix| -> f64 {
            row_normalize(zz).as_slice().iter().zip(dy.as_slice()).map(|(a, b)| a * b).sum()
        };
        for c in 0..3 {
            let h = 1e-6;
            let mut zp = z.clone();
            zp.set(0, c, z.get(0, c) + h);
            let mut zm = z.clone();
            zm.set(0, c, z.get(0, c) - h);
            let num = (f(&zp) - f(&zm)) / (2.0 * h);
            assert!((num - dz.get(0, c)).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_is_keyed_and_scaled() {
        let a = dropout_row(1, 2, 3, 4, 64, 0.5);
        assert_eq!(a, dropout_row(1, 2, 3, 4, 64, 0.5));
        assert_ne!(a, dropout_row(1, 2, 3, 5, 64, 0.5));
        assert!(a.iter().all(|&s| s == 0.0 || s == 2.0));
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = FeatureMatrix::zeros(2, 4);
        let out = softmax_cross_entropy(&logits, &[1, 3], &[true, false]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(out.grad.row(1), &[0.0; 4]);
        assert!((out.grad.get(0, 1) + 0.75).abs() < 1e-12);
        assert!((out.grad.get(0, 0) - 0.25).abs() < 1e-12);
    }
}
