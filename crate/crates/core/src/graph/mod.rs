//! Graph topology in compressed sparse row form, plus ingestion, synthetic
//! generators and the partition-aware adjacency reordering.

mod dataset;
mod generate;
pub mod io;

pub use dataset::LabeledDataset;
pub use generate::{generate_kronecker, generate_watts_strogatz, KRONECKER_INITIATOR};

use crate::error::{invalid, Error, Result};
use crate::partition::PartitionLabels;
use serde::Serialize;

/// Directed graph stored as source pointers plus destination indices.
///
/// Adjacency lists never contain duplicates or self-loops; the training
/// engine adds the implicit self-loop at aggregation time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrGraph {
    src_ptr: Vec<u64>,
    dst_idx: Vec<u32>,
}

impl CsrGraph {
    /// Builds a graph from `(src, dst)` pairs. Duplicate edges and self-loops
    /// are dropped; each adjacency list keeps the first-seen order of its
    /// destinations.
    pub fn from_edges(num_vertices: usize, edges: &[(u32, u32)]) -> Result<Self> {
        if num_vertices > u32::MAX as usize {
            return Err(invalid("vertex count exceeds u32 id space"));
        }
        let mut counts = vec![0u64; num_vertices + 1];
        for &(s, d) in edges {
            if s as usize >= num_vertices || d as usize >= num_vertices {
                return Err(invalid(format!(
                    "edge ({s}, {d}) out of range for {num_vertices} vertices"
                )));
            }
            counts[s as usize + 1] += 1;
        }
        for i in 0..num_vertices {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut raw = vec![0u32; edges.len()];
        for &(s, d) in edges {
            let slot = &mut fill[s as usize];
            raw[*slot as usize] = d;
            *slot += 1;
        }

        // Dedup per source with a stamp array; keeps first occurrence.
        let mut stamp = vec![u32::MAX; num_vertices];
        let mut src_ptr = Vec::with_capacity(num_vertices + 1);
        let mut dst_idx = Vec::with_capacity(edges.len());
        src_ptr.push(0u64);
        for v in 0..num_vertices {
            for &d in &raw[counts[v] as usize..counts[v + 1] as usize] {
                if d as usize == v || stamp[d as usize] == v as u32 {
                    continue;
                }
                stamp[d as usize] = v as u32;
                dst_idx.push(d);
            }
            src_ptr.push(dst_idx.len() as u64);
        }
        Ok(Self { src_ptr, dst_idx })
    }

    /// Like [`from_edges`](Self::from_edges) but inserts both directions of
    /// every pair.
    pub fn from_undirected_edges(num_vertices: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut both = Vec::with_capacity(edges.len() * 2);
        for &(a, b) in edges {
            both.push((a, b));
            both.push((b, a));
        }
        Self::from_edges(num_vertices, &both)
    }

    /// Wraps raw CSR arrays after checking every structural invariant.
    pub fn from_parts(src_ptr: Vec<u64>, dst_idx: Vec<u32>) -> Result<Self> {
        let g = Self { src_ptr, dst_idx };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.src_ptr.is_empty() || self.src_ptr[0] != 0 {
            return bad("src_ptr must start at 0".into());
        }
        if *self.src_ptr.last().unwrap() != self.dst_idx.len() as u64 {
            return bad("src_ptr must end at |E|".into());
        }
        if self.src_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("src_ptr must be non-decreasing".into());
        }
        let n = self.num_vertices();
        let mut stamp = vec![u32::MAX; n];
        for v in 0..n {
            for &d in self.neighbors(v) {
                if d as usize >= n {
                    return bad(format!("destination {d} out of range"));
                }
                if stamp[d as usize] == v as u32 {
                    return bad(format!("duplicate edge ({v}, {d})"));
                }
                stamp[d as usize] = v as u32;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.src_ptr.len() - 1
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.dst_idx.len()
    }

    pub fn src_ptr(&self) -> &[u64] {
        &self.src_ptr
    }

    pub fn dst_idx(&self) -> &[u32] {
        &self.dst_idx
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.dst_idx[self.src_ptr[v] as usize..self.src_ptr[v + 1] as usize]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        (self.src_ptr[v + 1] - self.src_ptr[v]) as usize
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_vertices())
            .flat_map(move |v| self.neighbors(v).iter().map(move |&d| (v as u32, d)))
    }

    pub fn export_edge_list(&self) -> Vec<(u32, u32)> {
        self.edges().collect()
    }

    /// Reverse every edge. Adjacency lists of the result are ascending.
    pub fn transpose(&self) -> CsrGraph {
        let n = self.num_vertices();
        let mut ptr = vec![0u64; n + 1];
        for &d in &self.dst_idx {
            ptr[d as usize + 1] += 1;
        }
        for i in 0..n {
            ptr[i + 1] += ptr[i];
        }
        let mut fill = ptr.clone();
        let mut idx = vec![0u32; self.dst_idx.len()];
        for (s, d) in self.edges() {
            let slot = &mut fill[d as usize];
            idx[*slot as usize] = s;
            *slot += 1;
        }
        CsrGraph {
            src_ptr: ptr,
            dst_idx: idx,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let t = self.transpose();
        (0..self.num_vertices()).all(|v| {
            let mut a = self.neighbors(v).to_vec();
            a.sort_unstable();
            a == t.neighbors(v)
        })
    }

    /// Sorts every adjacency list ascending.
    pub fn sorted(&self) -> CsrGraph {
        let mut g = self.clone();
        for v in 0..g.num_vertices() {
            let (lo, hi) = (g.src_ptr[v] as usize, g.src_ptr[v + 1] as usize);
            g.dst_idx[lo..hi].sort_unstable();
        }
        g
    }

    /// Orders each adjacency list by `(partition of destination, destination id)`
    /// so that gathers touch one contiguous run per source partition.
    pub fn reorder_adjacency(&self, labels: &PartitionLabels) -> Result<CsrGraph> {
        if labels.len() != self.num_vertices() {
            return Err(invalid(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.num_vertices()
            )));
        }
        let lab = labels.as_slice();
        let mut g = self.clone();
        for v in 0..g.num_vertices() {
            let (lo, hi) = (g.src_ptr[v] as usize, g.src_ptr[v + 1] as usize);
            g.dst_idx[lo..hi].sort_unstable_by_key(|&d| (lab[d as usize], d));
        }
        Ok(g)
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let n = self.num_vertices();
        let mut histogram = Vec::new();
        let mut max = 0usize;
        for v in 0..n {
            let d = self.degree(v);
            if d >= histogram.len() {
                histogram.resize(d + 1, 0);
            }
            histogram[d] += 1;
            max = max.max(d);
        }
        if histogram.is_empty() {
            histogram.push(0);
        }
        let mean = if n == 0 {
            0.0
        } else {
            self.num_edges() as f64 / n as f64
        };
        let variance = if n == 0 {
            0.0
        } else {
            (0..n)
                .map(|v| {
                    let x = self.degree(v) as f64 - mean;
                    x * x
                })
                .sum::<f64>()
                / n as f64
        };
        DegreeStats {
            histogram,
            mean,
            max,
            variance,
        }
    }
}

/// Out-degree summary. `histogram[d]` counts vertices of degree `d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeStats {
    pub histogram: Vec<usize>,
    pub mean: f64,
    pub max: usize,
    pub variance: f64,
}
