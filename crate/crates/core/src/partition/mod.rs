//! Vertex partitioning: label state, the switching-aware label-propagation
//! partitioner, a random baseline and partition-quality metrics.

mod memory;
mod quality;
mod score;
mod switching;

pub use memory::{partitioner_memory_report, AuxMemory};
pub use quality::{expansion_ratio, partition_objective, partition_quality, PartitionQuality};
pub(crate) use quality::required_sets;
pub use score::{partition_score, score_from_counts, vertex_preferences};
pub use switching::{refine_partition, switching_aware_partition, IterationRecord, PartitionOutcome};

use crate::error::{invalid, Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Partition id of every vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionLabels {
    labels: Vec<u32>,
    num_partitions: usize,
}

impl PartitionLabels {
    pub fn new(labels: Vec<u32>, num_partitions: usize) -> Result<Self> {
        if num_partitions == 0 {
            return Err(invalid("need at least one partition"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_partitions) {
            return Err(invalid(format!(
                "label {bad} outside {num_partitions} partitions"
            )));
        }
        Ok(Self {
            labels,
            num_partitions,
        })
    }

    /// Every vertex in partition 0.
    pub fn single(num_vertices: usize) -> Self {
        Self {
            labels: vec![0; num_vertices],
            num_partitions: 1,
        }
    }

    #[inline]
    pub fn get(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_partitions(&self) -> usize {
        self.num_partitions
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.num_partitions];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    pub fn empty_partitions(&self) -> Vec<u32> {
        self.sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(j, _)| j as u32)
            .collect()
    }

    /// Vertices of each partition, ascending.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut m: Vec<Vec<u32>> = vec![Vec::new(); self.num_partitions];
        for (v, &l) in self.labels.iter().enumerate() {
            m[l as usize].push(v as u32);
        }
        m
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.labels
    }
}

/// Knobs of the switching-aware partitioner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionerParams {
    /// Balance slack inside the size penalty.
    pub alpha_balance: f64,
    /// Hard per-partition capacity factor.
    pub beta: f64,
    /// Minimum relative objective improvement that counts as progress.
    pub epsilon: f64,
    /// Consecutive non-improving iterations before stopping.
    pub patience: usize,
    pub max_iters: usize,
    /// Preference depth; the relocation grouping uses the 2nd preference.
    pub group_depth: usize,
    pub seed: u64,
}

impl Default for PartitionerParams {
    fn default() -> Self {
        Self {
            alpha_balance: 1.1,
            beta: 1.1,
            epsilon: 1e-3,
            patience: 5,
            max_iters: 50,
            group_depth: 2,
            seed: 0,
        }
    }
}

impl PartitionerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_balance >= 1.0) {
            return Err(invalid("alpha_balance must be >= 1"));
        }
        if !(self.beta >= self.alpha_balance) {
            return Err(invalid("beta must be >= alpha_balance"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        if self.patience == 0 {
            return Err(invalid("patience must be >= 1"));
        }
        if self.group_depth < 2 {
            return Err(invalid("group_depth must be >= 2"));
        }
        Ok(())
    }

    /// `floor(beta · |V| / p)`, the size no partition may grow past. Never
    /// below `ceil(|V| / p)`, or tiny graphs could not be split at all.
    pub fn capacity_limit(&self, num_vertices: usize, num_partitions: usize) -> usize {
        // Tiny slack so products like 1.1 * 40 / 4 floor to 11, not 10.
        let cap = (self.beta * num_vertices as f64 / num_partitions as f64 + 1e-9).floor() as usize;
        cap.max(num_vertices.div_ceil(num_partitions.max(1)))
    }
}

/// Shuffles vertex ids with a seeded RNG and deals them round-robin, so
/// partition sizes differ by at most one.
pub fn random_partition(
    num_vertices: usize,
    num_partitions: usize,
    seed: u64,
) -> Result<PartitionLabels> {
    if num_partitions == 0 || num_partitions > num_vertices.max(1) {
        return Err(invalid(format!(
            "cannot split {num_vertices} vertices into {num_partitions} partitions"
        )));
    }
    let mut order: Vec<u32> = (0..num_vertices as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0u32; num_vertices];
    for (i, &v) in order.iter().enumerate() {
        labels[v as usize] = (i % num_partitions) as u32;
    }
    PartitionLabels::new(labels, num_partitions)
}

/// Remaining headroom of `partition`: `max(0, floor(β·|V|/p) − |P_j|)`.
pub fn relocation_capacity(
    labels: &PartitionLabels,
    params: &PartitionerParams,
    partition: u32,
) -> usize {
    let size = labels
        .as_slice()
        .iter()
        .filter(|&&l| l == partition)
        .count();
    params
        .capacity_limit(labels.len(), labels.num_partitions())
        .saturating_sub(size)
}

/// Writes `vertex<TAB>partition` lines in vertex order.
pub fn write_labels<W: Write>(labels: &PartitionLabels, mut w: W) -> Result<()> {
    for (v, l) in labels.as_slice().iter().enumerate() {
        writeln!(w, "{v}\t{l}")?;
    }
    Ok(())
}

/// Parses a labels file. Every vertex `0..n` must appear exactly once; the
/// partition count defaults to the largest label plus one.
pub fn read_labels<R: BufRead>(r: R, num_partitions: Option<usize>) -> Result<PartitionLabels> {
    let mut pairs = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let bad = || Error::Format(format!("labels line {}: {t:?}", lineno + 1));
        let mut it = t.split_whitespace();
        let v: usize = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        let l: u32 = it.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        pairs.push((v, l));
    }
    let n = pairs.len();
    let mut labels = vec![u32::MAX; n];
    for (v, l) in pairs {
        if v >= n || labels[v] != u32::MAX {
            return Err(Error::Format(format!("vertex {v} missing, repeated or out of range")));
        }
        labels[v] = l;
    }
    let p = num_partitions.unwrap_or_else(|| labels.iter().max().map_or(1, |&m| m as usize + 1));
    PartitionLabels::new(labels, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_partition_is_balanced_and_seeded() {
        let l = random_partition(8, 4, 3).unwrap();
        assert_eq!(l.sizes(), vec![2, 2, 2, 2]);
        assert_eq!(random_partition(24, 4, 9).unwrap(), random_partition(24, 4, 9).unwrap());
        let l = random_partition(1001, 7, 1).unwrap();
        let s = l.sizes();
        assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
    }

    #[test]
    fn random_partition_rejects_too_many_parts() {
        assert!(random_partition(3, 4, 0).is_err());
        assert!(random_partition(3, 0, 0).is_err());
    }

    #[test]
    fn relocation_capacity_cases() {
        let params = PartitionerParams::default();
        // 40 vertices, 4 parts, beta 1.1: limit 11; partition 0 holds 5.
        let mut lab = vec![0u32; 5];
        lab.extend(std::iter::repeat_n(1, 12));
        lab.extend(std::iter::repeat_n(2, 12));
        lab.extend(std::iter::repeat_n(3, 11));
        let l = PartitionLabels::new(lab, 4).unwrap();
        assert_eq!(relocation_capacity(&l, &params, 0), 6);
        assert_eq!(relocation_capacity(&l, &params, 3), 0);
        assert_eq!(relocation_capacity(&l, &params, 1), 0);

        // 24 vertices, 4 parts: floor(6.6) - 5 = 1.
        let mut lab = vec![0u32; 5];
        lab.extend((0..19).map(|i| 1 + (i % 3) as u32));
        let l = PartitionLabels::new(lab, 4).unwrap();
        assert_eq!(relocation_capacity(&l, &params, 0), 1);

        // Saturation with beta = 1.5: floor(1.5 * 8 / 4) = 3.
        let p = PartitionerParams {
            alpha_balance: 1.5,
            beta: 1.5,
            ..Default::default()
        };
        let l = PartitionLabels::new(vec![0, 0, 0, 1, 1, 2, 2, 3], 4).unwrap();
        assert_eq!(relocation_capacity(&l, &p, 0), 0);
    }

    #[test]
    fn params_validation() {
        assert!(PartitionerParams::default().validate().is_ok());
        let bad = PartitionerParams {
            beta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PartitionerParams {
            group_depth: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn labels_reject_out_of_range() {
        assert!(PartitionLabels::new(vec![0, 2], 2).is_err());
        let l = PartitionLabels::new(vec![0, 0, 2], 3).unwrap();
        assert_eq!(l.empty_partitions(), vec![1]);
        assert_eq!(l.members(), vec![vec![0, 1], vec![], vec![2]]);
    }

    #[test]
    fn labels_file_round_trip() {
        let l = random_partition(9, 3, 4).unwrap();
        let mut buf = Vec::new();
        write_labels(&l, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("0\t"));
        assert_eq!(read_labels(buf.as_slice(), Some(3)).unwrap(), l);
        assert!(read_labels(&b"0\t0\n0\t1\n"[..], None).is_err());
        assert!(read_labels(&b"0\tx\n"[..], None).is_err());
    }
}
