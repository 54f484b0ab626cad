use anyhow::{bail, Context, Result};
use grinder_core::partition::PartitionerParams;
use grinder_core::sim::{HierarchyConfig, PolicyKind, PolicySpec};
use grinder_core::train::ModelConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Kronecker {
        scale: u32,
        avg_degree: usize,
        seed: u64,
    },
    WattsStrogatz {
        n: usize,
        mean_degree: usize,
        rewire_prob: f64,
        seed: u64,
    },
    /// `src dst` text, ids remapped densely.
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        symmetrize: bool,
    },
    /// Binary CSR.
    Csr { path: PathBuf },
}

impl Default for GraphSource {
    fn default() -> Self {
        Self::Kronecker {
            scale: 10,
            avg_degree: 10,
            seed: 1,
        }
    }
}

/// Vertex features and class labels. Without files they are synthesized
/// from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub dim: usize,
    pub classes: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// f32 matrix, one row per vertex.
    pub features_path: Option<PathBuf>,
    /// u32 array of class ids.
    pub labels_path: Option<PathBuf>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            classes: 4,
            train_fraction: 0.5,
            seed: 2,
            features_path: None,
            labels_path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    #[default]
    SwitchingAware,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    pub num_partitions: usize,
    pub method: PartitionMethod,
    pub params: PartitionerParams,
    /// Precomputed `vertex<TAB>partition` file; skips partitioning.
    pub labels_path: Option<PathBuf>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            num_partitions: 4,
            method: PartitionMethod::SwitchingAware,
            params: PartitionerParams {
                seed: 3,
                ..Default::default()
            },
            labels_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub model: ModelConfig,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                seed: 4,
                ..Default::default()
            },
            lr: 0.01,
            epochs: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub alphas: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            from: 1.0,
            to: 4.0,
            step: 0.05,
            alphas: vec![2, 4, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub features: FeatureSpec,
    pub partition: PartitionSpec,
    pub model: ModelSpec,
    pub hierarchy: HierarchyConfig,
    pub policies: Vec<PolicySpec>,
    /// Epochs simulated per policy by `simulate`.
    pub sim_epochs: usize,
    pub sweep: Option<SweepSpec>,
    pub verify: bool,
    pub verify_tolerance: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource::default(),
            features: FeatureSpec::default(),
            partition: PartitionSpec::default(),
            model: ModelSpec::default(),
            hierarchy: HierarchyConfig::default(),
            policies: [PolicyKind::Grinnder, PolicyKind::HongtuSwap, PolicyKind::Naive]
                .into_iter()
                .map(PolicySpec::new)
                .collect(),
            sim_epochs: 1,
            sweep: None,
            verify: false,
            verify_tolerance: 1e-5,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub verify: bool,
    pub sweep: Option<String>,
    pub alphas: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub p: Option<usize>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub policies: Option<String>,
}

pub fn parse_sweep(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        bail!("--sweep-bandwidth wants a:b:step, got {s:?}");
    };
    let f = |x: &str| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?} in {s:?}"));
    Ok((f(a)?, f(b)?, f(step)?))
}

pub fn parse_policies(s: &str) -> Result<Vec<PolicySpec>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| Ok(PolicySpec::new(PolicyKind::parse(x)?)))
        .collect()
}

impl ExperimentConfig {
    /// Reads `path`; relative file paths inside it resolve against the
    /// config's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.for_each_path(|p| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        });
        Ok(cfg)
    }

    fn for_each_path(&mut self, mut f: impl FnMut(&mut PathBuf)) {
        match &mut self.graph {
            GraphSource::EdgeList { path, .. } | GraphSource::Csr { path } => f(path),
            _ => {}
        }
        for p in [
            &mut self.features.features_path,
            &mut self.features.labels_path,
            &mut self.partition.labels_path,
        ]
        .into_iter()
        .flatten()
        {
            f(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        self.verify |= o.verify;
        if let Some(s) = &o.sweep {
            let (from, to, step) = parse_sweep(s)?;
            let alphas = self.sweep.take().map(|s| s.alphas).unwrap_or_else(|| SweepSpec::default().alphas);
            self.sweep = Some(SweepSpec { from, to, step, alphas });
        }
        if let Some(a) = &o.alphas {
            self.sweep.get_or_insert_with(SweepSpec::default).alphas = a.clone();
        }
        if let Some(seed) = o.seed {
            // One master seed fans out to every stochastic stage.
            match &mut self.graph {
                GraphSource::Kronecker { seed: s, .. } | GraphSource::WattsStrogatz { seed: s, .. } => *s = seed,
                _ => {}
            }
            self.features.seed = seed.wrapping_add(1);
            self.partition.params.seed = seed.wrapping_add(2);
            self.model.model.seed = seed.wrapping_add(3);
        }
        if let Some(p) = o.p {
            self.partition.num_partitions = p;
        }
        if let Some(l) = o.layers {
            self.model.model.num_layers = l;
        }
        if let Some(h) = o.hidden {
            self.model.model.hidden_dim = h;
        }
        if let Some(e) = o.epochs {
            self.model.epochs = e;
        }
        if let Some(p) = &o.policies {
            self.policies = parse_policies(p)?;
        }
        Ok(())
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        let mut missing = Vec::new();
        let mut me = self.clone();
        me.for_each_path(|p| {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        });
        if !missing.is_empty() {
            bail!("missing input files: {}", missing.join(", "));
        }
        if self.partition.num_partitions == 0 {
            bail!("num_partitions must be >= 1");
        }
        if self.features.features_path.is_some() != self.features.labels_path.is_some() {
            bail!("features_path and labels_path must be given together");
        }
        if !(0.0..=1.0).contains(&self.features.train_fraction) {
            bail!("train_fraction must lie in [0, 1]");
        }
        if !(self.model.lr.is_finite() && self.model.lr >= 0.0) {
            bail!("lr must be finite and non-negative");
        }
        if self.verify_tolerance.is_nan() || self.verify_tolerance < 0.0 {
            bail!("verify_tolerance must be non-negative");
        }
        if let Some(s) = &self.sweep {
            if s.alphas.is_empty() || s.alphas.contains(&0) {
                bail!("sweep alphas must be positive integers");
            }
        }
        self.partition.params.validate()?;
        self.model.model.validate()?;
        self.hierarchy.validate()?;
        Ok(())
    }
}
