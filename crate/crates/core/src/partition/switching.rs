//! Switching-aware partitioning: capacity-limited label propagation that
//! relocates vertices in groups sharing a 2nd-preference partition.
//!
//! State is the CSR plus two arrays: the label of every vertex and a shadow
//! copy of each destination's label laid out like `dst_idx` (the
//! "destination partition" array). One iteration:
//!
//! 1. every vertex whose most frequent neighbor partition holds strictly more
//!    of its neighbors than its own partition becomes a candidate for that
//!    partition;
//! 2. candidates are bucketed by target partition (in place, ascending id
//!    inside each bucket);
//! 3. inside each bucket, candidates are grouped by 2nd preference and the
//!    largest group (ties: smaller 2nd-preference id) moves, truncated to the
//!    target's relocation capacity. Moves are committed one at a time and a
//!    vertex whose preference no longer holds under the updated labels is
//!    skipped;
//! 4. the shadow array is refreshed from the new labels.

use super::score::PrefScratch;
use super::{random_partition, AuxMemory, PartitionLabels, PartitionerParams};
use crate::error::{invalid, Result};
use crate::graph::CsrGraph;
use crate::par;
use serde::Serialize;

/// Edges refreshed per worker task when updating the shadow array.
const SHADOW_CHUNK: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub moved: usize,
    pub max_partition_size: usize,
}

#[derive(Clone, Debug)]
pub struct PartitionOutcome {
    pub labels: PartitionLabels,
    /// Objective of the starting labels.
    pub initial_objective: f64,
    /// One record per refinement iteration.
    pub trace: Vec<IterationRecord>,
    /// True when the stopping rule (or a fixed point) fired before
    /// `max_iters` ran out.
    pub converged: bool,
    pub empty_partitions: Vec<u32>,
    pub memory: AuxMemory,
}

impl PartitionOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn objective_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }
}

/// Random start followed by [`refine_partition`].
pub fn switching_aware_partition(
    graph: &CsrGraph,
    num_partitions: usize,
    params: &PartitionerParams,
) -> Result<PartitionOutcome> {
    params.validate()?;
    let n = graph.num_vertices();
    if num_partitions == 0 || num_partitions > n.max(1) {
        return Err(invalid(format!(
            "cannot split {n} vertices into {num_partitions} partitions"
        )));
    }
    let start = if num_partitions == 1 {
        PartitionLabels::single(n)
    } else {
        random_partition(n, num_partitions, params.seed)?
    };
    refine_partition(graph, start, params)
}

/// Iteratively refines `labels` until the objective stops improving by more
/// than `epsilon` (relative) for `patience` consecutive iterations, no vertex
/// moves, or `max_iters` is reached.
pub fn refine_partition(
    graph: &CsrGraph,
    labels: PartitionLabels,
    params: &PartitionerParams,
) -> Result<PartitionOutcome> {
    params.validate()?;
    let n = graph.num_vertices();
    if labels.len() != n {
        return Err(invalid(format!("{} labels for {n} vertices", labels.len())));
    }
    let p = labels.num_partitions();
    let mut state = State::new(graph, labels, params);
    let initial_objective = state.objective();
    let mut trace = Vec::new();
    let mut converged = p == 1;

    if p > 1 {
        let mut prev = initial_objective;
        let mut stall = 0usize;
        for iteration in 1..=params.max_iters {
            let moved = state.step();
            let objective = state.objective();
            trace.push(IterationRecord {
                iteration,
                objective,
                moved,
                max_partition_size: state.sizes.iter().copied().max().unwrap_or(0),
            });
            if moved == 0 {
                converged = true;
                break;
            }
            let gain = if prev == 0.0 {
                if objective == prev {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (objective - prev) / prev.abs()
            };
            stall = if gain < params.epsilon { stall + 1 } else { 0 };
            prev = objective;
            if stall >= params.patience {
                converged = true;
                break;
            }
        }
    }

    let memory = state.memory();
    let labels = PartitionLabels::new(state.labels, p)?;
    Ok(PartitionOutcome {
        empty_partitions: labels.empty_partitions(),
        labels,
        initial_objective,
        trace,
        converged,
        memory,
    })
}

struct State<'g> {
    graph: &'g CsrGraph,
    params: &'g PartitionerParams,
    p: usize,
    labels: Vec<u32>,
    /// `dst_part[e] == labels[dst_idx[e]]` between iterations.
    dst_part: Vec<u32>,
    sizes: Vec<usize>,
    limit: usize,
    candidate_peak: usize,
}

impl<'g> State<'g> {
    fn new(graph: &'g CsrGraph, labels: PartitionLabels, params: &'g PartitionerParams) -> Self {
        let p = labels.num_partitions();
        let sizes = labels.sizes();
        let labels = labels.into_vec();
        let dst_part = graph.dst_idx().iter().map(|&d| labels[d as usize]).collect();
        Self {
            graph,
            params,
            p,
            limit: params.capacity_limit(graph.num_vertices(), p),
            labels,
            dst_part,
            sizes,
            candidate_peak: 0,
        }
    }

    #[inline]
    fn neighbor_parts(&self, v: usize) -> &[u32] {
        let ptr = self.graph.src_ptr();
        &self.dst_part[ptr[v] as usize..ptr[v + 1] as usize]
    }

    /// `Σ_v 1 + N(v, own)/N(v, ·) − |P_own| / (α_balance·|V|/p)`.
    fn objective(&self) -> f64 {
        let n = self.labels.len();
        if n == 0 {
            return 0.0;
        }
        let affinity = par::ordered_sum(n, |v| {
            let parts = self.neighbor_parts(v);
            if parts.is_empty() {
                return 0.0;
            }
            let own = self.labels[v];
            parts.iter().filter(|&&q| q == own).count() as f64 / parts.len() as f64
        });
        let unit = self.params.alpha_balance * n as f64 / self.p as f64;
        let penalty: f64 = self
            .sizes
            .iter()
            .map(|&s| s as f64 * s as f64 / unit)
            .sum();
        n as f64 + affinity - penalty
    }

    fn first_preference(&self, s: &mut PrefScratch, v: u32) -> u32 {
        s.fill(self.neighbor_parts(v as usize).iter().copied());
        s.top_two().0.expect("candidates have neighbors")
    }

    /// 2nd preference, or `p` when the vertex has a single neighbor partition.
    fn second_preference(&self, s: &mut PrefScratch, v: u32) -> u32 {
        s.fill(self.neighbor_parts(v as usize).iter().copied());
        s.top_two().1.unwrap_or(self.p as u32)
    }

    /// Re-checks a move against the labels as updated by earlier commits of
    /// this iteration.
    fn still_wants(&self, s: &mut PrefScratch, v: u32, target: u32) -> bool {
        let labels = &self.labels;
        s.fill(self.graph.neighbors(v as usize).iter().map(|&u| labels[u as usize]));
        let own = labels[v as usize];
        s.top_two().0 == Some(target) && s.count(target) > s.count(own)
    }

    fn step(&mut self) -> usize {
        let p = self.p;
        let n = self.labels.len();

        let mut candidates = {
            let this = &*self;
            par::filter_range_init(
                n,
                || PrefScratch::new(p),
                |s, v| {
                    let parts = this.neighbor_parts(v);
                    if parts.is_empty() {
                        return false;
                    }
                    s.fill(parts.iter().copied());
                    let first = s.top_two().0.unwrap();
                    let own = this.labels[v];
                    first != own && s.count(first) > s.count(own)
                },
            )
        };
        self.candidate_peak = self.candidate_peak.max(candidates.len());
        if candidates.is_empty() {
            return 0;
        }

        let offsets = self.bucket_by_first_preference(&mut candidates);

        let rc: Vec<usize> = self
            .sizes
            .iter()
            .map(|&s| self.limit.saturating_sub(s))
            .collect();

        // Pick the winning 2nd-preference group of every target partition.
        let picks: Vec<(u32, usize)> = {
            let this = &*self;
            let cands = &candidates;
            let offsets = &offsets;
            let rc = &rc;
            par::map_range_init(
                p,
                || (PrefScratch::new(p), vec![0usize; p + 1]),
                |(s, groups), j| {
                    let bucket = &cands[offsets[j]..offsets[j + 1]];
                    if bucket.is_empty() || rc[j] == 0 {
                        return (0, 0);
                    }
                    groups.iter_mut().for_each(|g| *g = 0);
                    for &v in bucket {
                        groups[this.second_preference(s, v) as usize] += 1;
                    }
                    let (key, size) = groups
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                        .map(|(k, &c)| (k as u32, c))
                        .unwrap();
                    (key, size.min(rc[j]))
                },
            )
        };

        let mut scratch = PrefScratch::new(p);
        let mut moved = 0usize;
        for j in 0..p {
            let (key, take) = picks[j];
            let mut taken = 0;
            for &v in &candidates[offsets[j]..offsets[j + 1]] {
                if taken == take {
                    break;
                }
                if self.second_preference(&mut scratch, v) != key
                    || !self.still_wants(&mut scratch, v, j as u32)
                {
                    continue;
                }
                let old = self.labels[v as usize];
                self.sizes[old as usize] -= 1;
                self.sizes[j] += 1;
                self.labels[v as usize] = j as u32;
                taken += 1;
            }
            moved += taken;
        }

        let labels = &self.labels;
        let dst = self.graph.dst_idx();
        par::for_each_chunk_mut(&mut self.dst_part, SHADOW_CHUNK, |c, chunk| {
            let base = c * SHADOW_CHUNK;
            for (i, slot) in chunk.iter_mut().enumerate() {
                *slot = labels[dst[base + i] as usize];
            }
        });
        moved
    }

    /// In-place bucket sort of `items` by first preference, then ascending id
    /// within each bucket. Returns `p + 1` bucket offsets.
    fn bucket_by_first_preference(&self, items: &mut [u32]) -> Vec<usize> {
        let p = self.p;
        let mut s = PrefScratch::new(p);
        let mut offsets = vec![0usize; p + 1];
        for &v in items.iter() {
            offsets[self.first_preference(&mut s, v) as usize + 1] += 1;
        }
        for j in 0..p {
            offsets[j + 1] += offsets[j];
        }
        let mut next = offsets[..p].to_vec();
        for b in 0..p {
            while next[b] < offsets[b + 1] {
                let k = self.first_preference(&mut s, items[next[b]]) as usize;
                if k == b {
                    next[b] += 1;
                } else {
                    items.swap(next[b], next[k]);
                    next[k] += 1;
                }
            }
        }
        for b in 0..p {
            items[offsets[b]..offsets[b + 1]].sort_unstable();
        }
        offsets
    }

    fn memory(&self) -> AuxMemory {
        AuxMemory {
            label_words: self.labels.len(),
            dst_partition_words: self.dst_part.len(),
            candidate_words: self.candidate_peak,
            // sizes, capacities, bucket offsets, bucket cursors, picks
            shared_metadata_words: 6 * self.p + 1,
            per_worker_words: PrefScratch::words(self.p) + self.p + 1,
        }
    }
}
