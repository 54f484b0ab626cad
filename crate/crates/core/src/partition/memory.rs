use super::score::PrefScratch;
use crate::graph::CsrGraph;
use serde::Serialize;

/// Auxiliary memory of the partitioner in 32-bit words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AuxMemory {
    /// One label per vertex.
    pub label_words: usize,
    /// Shadow partition of every adjacency destination.
    pub dst_partition_words: usize,
    /// Peak candidate list length.
    pub candidate_words: usize,
    /// Partition sizes, capacities and bucket bookkeeping.
    pub shared_metadata_words: usize,
    /// Histogram scratch held by each worker.
    pub per_worker_words: usize,
}

impl AuxMemory {
    /// Words that scale with the graph.
    pub fn graph_words(&self) -> usize {
        self.label_words + self.dst_partition_words + self.candidate_words
    }

    pub fn total_words(&self, workers: usize) -> usize {
        self.graph_words() + self.shared_metadata_words + workers * self.per_worker_words
    }

    /// `2|V| + 2|E|` plus metadata and `workers` scratch copies.
    pub fn within_bound(&self, num_vertices: usize, num_edges: usize, workers: usize) -> bool {
        let meta = self.shared_metadata_words + workers * self.per_worker_words;
        self.total_words(workers) <= 2 * num_vertices + 2 * num_edges + meta
    }
}

/// Worst-case footprint of partitioning `graph` into `num_partitions`
/// (every vertex a candidate).
pub fn partitioner_memory_report(graph: &CsrGraph, num_partitions: usize) -> AuxMemory {
    let p = num_partitions;
    AuxMemory {
        label_words: graph.num_vertices(),
        dst_partition_words: graph.num_edges(),
        candidate_words: graph.num_vertices(),
        shared_metadata_words: 6 * p + 1,
        per_worker_words: PrefScratch::words(p) + p + 1,
    }
}
