use super::model::ModelState;
use super::reference::{forward_backward, Monolithic};
use crate::error::{invalid, Result};
use crate::graph::LabeledDataset;
use crate::matrix::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Floor on the denominator of the relative error.
pub const FD_ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation moved some ReLU input across zero.
    pub skipped: usize,
}

fn crosses_kink(a: &[FeatureMatrix], b: &[FeatureMatrix]) -> bool {
    a.iter().zip(b).any(|(x, y)| {
        x.as_slice()
            .iter()
            .zip(y.as_slice())
            .any(|(&p, &q)| (p > 0.0) != (q > 0.0))
    })
}

/// Compares analytic weight gradients against central differences on
/// `samples` weight coordinates drawn from `seed`. A coordinate is skipped
/// when the `±eps_fd` passes disagree on the sign of any hidden
/// pre-activation, since the loss is not differentiable across that kink.
pub fn finite_difference_check(
    data: &LabeledDataset,
    model: &ModelState,
    eps_fd: f64,
    samples: usize,
    seed: u64,
) -> Result<FdReport> {
    if !(eps_fd > 0.0) {
        return Err(invalid("eps_fd must be positive"));
    }
    data.validate()?;
    let mono = Monolithic::new(&data.graph);
    let base = forward_backward(&mono, data, model, 1)?;
    let sizes: Vec<usize> = model.weights.iter().map(|w| w.rows() * w.cols()).collect();
    let total: usize = sizes.iter().sum();
    let mut report = FdReport::default();
    if total == 0 {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    for _ in 0..samples {
        let mut k = rng.gen_range(0..total);
        let mut l = 0;
        while k >= sizes[l] {
            k -= sizes[l];
            l += 1;
        }
        let cols = model.weights[l].cols();
        let (r, c) = (k / cols, k % cols);
        let w = model.weights[l].get(r, c);
        probe.weights[l].set(r, c, w + eps_fd);
        let plus = forward_backward(&mono, data, &probe, 1)?;
        probe.weights[l].set(r, c, w - eps_fd);
        let minus = forward_backward(&mono, data, &probe, 1)?;
        probe.weights[l].set(r, c, w);
        if crosses_kink(&plus.pre_activations, &minus.pre_activations) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * eps_fd);
        let analytic = base.weight_grads[l].get(r, c);
        let rel = (analytic - numeric).abs() / analytic.abs().max(FD_ABS_FLOOR);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CsrGraph;
    use crate::train::model::ModelConfig;

    fn data(zero: bool) -> LabeledDataset {
        let g = CsrGraph::from_undirected_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)]).unwrap();
        let f = FeatureMatrix::from_fn(6, 3, |r, c| if zero { 0.0 } else { ((r * 5 + c * 2) % 7) as f64 / 3.0 - 1.0 });
        LabeledDataset::new(g, f, vec![0, 1, 0, 1, 1, 0], 2, vec![true; 6]).unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_dim: 2,
            seed: 4,
            ..Default::default()
        };
        let m = ModelState::init(cfg, 3, 2).unwrap();
        let r = finite_difference_check(&data(false), &m, 1e-5, 6, 1).unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn relu_network() {
        let cfg = ModelConfig {
            num_layers: 3,
            hidden_dim: 5,
            seed: 9,
            ..Default::default()
        };
        let m = ModelState::init(cfg, 3, 2).unwrap();
        let r = finite_difference_check(&data(false), &m, 1e-5, 40, 2).unwrap();
        assert!(r.checked > 20);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_features() {
        let cfg = ModelConfig {
            num_layers: 2,
            hidden_dim: 3,
            ..Default::default()
        };
        let m = ModelState::init(cfg, 3, 2).unwrap();
        let r = finite_difference_check(&data(true), &m, 1e-4, 10, 3).unwrap();
        assert_eq!(r.checked + r.skipped, 10);
        assert!(r.max_rel_error < 1e-7);
    }
}
