use crate::error::{invalid, Error, Result};
use crate::matrix::FeatureMatrix;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// How a target combines itself and its in-neighbors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// `1/(deg_in(v)+1)` on every term.
    #[default]
    MeanSelfLoop,
    /// `1/sqrt((deg_in(v)+1)(deg_out(u)+1))`.
    SymmetricNorm,
}

impl AggregationMode {
    #[inline]
    pub fn coefficient(self, target_in_degree: u32, source_out_degree: u32) -> f64 {
        match self {
            Self::MeanSelfLoop => 1.0 / (target_in_degree as f64 + 1.0),
            Self::SymmetricNorm => {
                1.0 / ((target_in_degree as f64 + 1.0) * (source_out_degree as f64 + 1.0)).sqrt()
            }
        }
    }
}

/// Architecture and training switches shared by both execution modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub aggregation: AggregationMode,
    /// L2-normalize every output row before the activation.
    pub row_norm: bool,
    /// Drop probability on layer inputs; 0 disables dropout.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            hidden_dim: 256,
            aggregation: AggregationMode::MeanSelfLoop,
            row_norm: false,
            dropout: 0.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(invalid("need at least one layer"));
        }
        if self.hidden_dim == 0 {
            return Err(invalid("hidden_dim must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `[in, hidden, .., hidden, classes]`, one entry more than layers.
    pub fn dims(&self, in_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut d = vec![in_dim];
        d.extend(std::iter::repeat_n(self.hidden_dim, self.num_layers - 1));
        d.push(num_classes);
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    /// `weights[l]` maps layer `l` inputs to outputs (0-based).
    pub weights: Vec<FeatureMatrix>,
    pub weight_grads: Vec<FeatureMatrix>,
}

impl ModelState {
    /// Glorot-uniform weights drawn layer by layer from one seeded stream.
    pub fn init(config: ModelConfig, in_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        let dims = config.dims(in_dim, num_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights: Vec<FeatureMatrix> = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]).max(1) as f64).sqrt();
                FeatureMatrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-limit..limit))
            })
            .collect();
        Self::from_weights(config, weights)
    }

    pub fn from_weights(config: ModelConfig, weights: Vec<FeatureMatrix>) -> Result<Self> {
        if weights.len() != config.num_layers {
            return Err(invalid(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                config.num_layers
            )));
        }
        for w in weights.windows(2) {
            if w[0].cols() != w[1].rows() {
                return Err(Error::Shape(format!(
                    "layer shapes {:?} and {:?} do not chain",
                    w[0].shape(),
                    w[1].shape()
                )));
            }
        }
        let weight_grads = weights
            .iter()
            .map(|w| FeatureMatrix::zeros(w.rows(), w.cols()))
            .collect();
        Ok(Self {
            config,
            weights,
            weight_grads,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].rows()];
        d.extend(self.weights.iter().map(FeatureMatrix::cols));
        d
    }

    /// `W -= lr · ∇W` for every layer.
    pub fn apply_gradients(&mut self, lr: f64) -> Result<()> {
        for (w, g) in self.weights.iter_mut().zip(&self.weight_grads) {
            w.sub_scaled(lr, g)?;
        }
        Ok(())
    }

    pub fn max_weight_diff(&self, other: &ModelState) -> f64 {
        if self.weights.len() != other.weights.len() {
            return f64::INFINITY;
        }
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Header `u64 L`, `L+1` u64 dims, then each weight matrix row-major as f64.
pub fn write_checkpoint<W: Write>(model: &ModelState, mut w: W) -> Result<()> {
    let dims = model.dims();
    w.write_u64::<LittleEndian>(model.num_layers() as u64)?;
    for &d in &dims {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for m in &model.weights {
        for &v in m.as_slice() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

/// Reads weights written by [`write_checkpoint`]; `config` supplies the
/// non-shape settings.
pub fn read_checkpoint<R: Read>(mut r: R, config: ModelConfig) -> Result<ModelState> {
    let layers = r.read_u64::<LittleEndian>()? as usize;
    if layers != config.num_layers {
        return Err(Error::Format(format!(
            "checkpoint has {layers} layers, config {}",
            config.num_layers
        )));
    }
    let mut dims = vec![0u64; layers + 1];
    r.read_u64_into::<LittleEndian>(&mut dims)?;
    let mut weights = Vec::with_capacity(layers);
    for w in dims.windows(2) {
        let (rows, cols) = (w[0] as usize, w[1] as usize);
        let mut data = vec![0f64; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        weights.push(FeatureMatrix::from_vec(rows, cols, data)?);
    }
    ModelState::from_weights(config, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn cfg(layers: usize) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            hidden_dim: 5,
            ..Default::default()
        }
    }

    #[test]
    fn dims_chain() {
        let m = ModelState::init(cfg(3), 7, 2).unwrap();
        assert_eq!(m.dims(), vec![7, 5, 5, 2]);
        assert_eq!(m.weights[1].shape(), (5, 5));
        assert_eq!(m.weight_grads[2].shape(), (5, 2));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelState::init(cfg(2), 4, 3).unwrap();
        let b = ModelState::init(cfg(2), 4, 3).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 9.0).sqrt();
        assert!(a.weights[0].as_slice().iter().all(|v| v.abs() < limit));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = ModelState::init(cfg(3), 4, 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 5 + 8 * (4 * 5 + 5 * 5 + 5 * 3));
        let back = read_checkpoint(Cursor::new(buf), cfg(3)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let mut m = ModelState::init(cfg(2), 3, 2).unwrap();
        let before = m.clone();
        m.weight_grads[0].fill(3.0);
        m.apply_gradients(0.0).unwrap();
        assert_eq!(m.weights, before.weights);
    }

    #[test]
    fn coefficients() {
        assert_eq!(AggregationMode::MeanSelfLoop.coefficient(2, 9), 1.0 / 3.0);
        assert_eq!(AggregationMode::SymmetricNorm.coefficient(3, 0), 0.5);
    }
}
