use super::CsrGraph;
use crate::error::{invalid, Result};
use crate::matrix::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A graph with per-vertex input features, class labels and a training mask.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub graph: CsrGraph,
    pub features: FeatureMatrix,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
}

impl LabeledDataset {
    pub fn new(
        graph: CsrGraph,
        features: FeatureMatrix,
        labels: Vec<u32>,
        num_classes: usize,
        train_mask: Vec<bool>,
    ) -> Result<Self> {
        let ds = Self {
            graph,
            features,
            labels,
            num_classes,
            train_mask,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_vertices();
        if self.features.rows() != n {
            return Err(invalid(format!(
                "{} feature rows for {n} vertices",
                self.features.rows()
            )));
        }
        if self.labels.len() != n || self.train_mask.len() != n {
            return Err(invalid("labels and train mask must cover every vertex"));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l as usize >= self.num_classes) {
            return Err(invalid(format!(
                "label {bad} outside {} classes",
                self.num_classes
            )));
        }
        if !self.features.is_finite() {
            return Err(invalid("features contain non-finite values"));
        }
        Ok(())
    }

    /// Uniform random features in `[-1, 1)`, uniform random labels and a
    /// Bernoulli(`train_fraction`) mask, all drawn from one seeded stream.
    pub fn synthetic(
        graph: CsrGraph,
        feature_dim: usize,
        num_classes: usize,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(invalid("need at least one class"));
        }
        let n = graph.num_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = FeatureMatrix::from_fn(n, feature_dim, |_, _| rng.gen_range(-1.0..1.0));
        let labels = (0..n).map(|_| rng.gen_range(0..num_classes as u32)).collect();
        let train_mask = (0..n).map(|_| rng.gen_bool(train_fraction)).collect();
        Self::new(graph, features, labels, num_classes, train_mask)
    }

    pub fn num_train(&self) -> usize {
        self.train_mask.iter().filter(|&&m| m).count()
    }
}
