use super::{PartitionLabels, PartitionerParams};
use crate::graph::CsrGraph;

/// Per-worker neighbor-partition histogram. `counts` is dense over
/// partitions; `touched` lists the non-zero slots so clearing is O(degree).
pub(crate) struct PrefScratch {
    counts: Vec<u32>,
    touched: Vec<u32>,
}

impl PrefScratch {
    pub(crate) fn new(num_partitions: usize) -> Self {
        Self {
            counts: vec![0; num_partitions + 1],
            touched: Vec::new(),
        }
    }

    /// Word footprint of one scratch instance.
    pub(crate) fn words(num_partitions: usize) -> usize {
        2 * (num_partitions + 1)
    }

    pub(crate) fn fill(&mut self, parts: impl Iterator<Item = u32>) {
        for &t in &self.touched {
            self.counts[t as usize] = 0;
        }
        self.touched.clear();
        for p in parts {
            let c = &mut self.counts[p as usize];
            if *c == 0 {
                self.touched.push(p);
            }
            *c += 1;
        }
    }

    #[inline]
    pub(crate) fn count(&self, partition: u32) -> u32 {
        self.counts[partition as usize]
    }

    /// The `k` most frequent partitions, ties broken by ascending id.
    pub(crate) fn top(&self, k: usize) -> Vec<u32> {
        let mut t = self.touched.clone();
        t.sort_unstable_by_key(|&p| (std::cmp::Reverse(self.counts[p as usize]), p));
        t.truncate(k);
        t
    }

    /// 1st and 2nd preference without allocating.
    pub(crate) fn top_two(&self) -> (Option<u32>, Option<u32>) {
        let better = |a: u32, b: u32| {
            let (ca, cb) = (self.counts[a as usize], self.counts[b as usize]);
            ca > cb || (ca == cb && a < b)
        };
        let mut first: Option<u32> = None;
        let mut second: Option<u32> = None;
        for &p in &self.touched {
            match first {
                None => first = Some(p),
                Some(f) if better(p, f) => {
                    second = first;
                    first = Some(p);
                }
                _ => match second {
                    None => second = Some(p),
                    Some(s) if better(p, s) => second = Some(p),
                    _ => {}
                },
            }
        }
        (first, second)
    }
}

/// `1 + n_j / n_total − |P_j| / (α_balance · |V| / p)`.
///
/// With `n_total == 0` (isolated vertex) the neighbor term is zero.
pub fn score_from_counts(
    neighbors_in_partition: usize,
    total_neighbors: usize,
    partition_size: usize,
    num_vertices: usize,
    num_partitions: usize,
    alpha_balance: f64,
) -> f64 {
    let affinity = if total_neighbors == 0 {
        0.0
    } else {
        neighbors_in_partition as f64 / total_neighbors as f64
    };
    let penalty =
        partition_size as f64 / (alpha_balance * num_vertices as f64 / num_partitions as f64);
    1.0 + affinity - penalty
}

/// Preference score of moving/keeping `vertex` in `partition` under the
/// current labels.
pub fn partition_score(
    vertex: usize,
    partition: u32,
    labels: &PartitionLabels,
    graph: &CsrGraph,
    params: &PartitionerParams,
) -> f64 {
    let lab = labels.as_slice();
    let nbrs = graph.neighbors(vertex);
    let hits = nbrs.iter().filter(|&&u| lab[u as usize] == partition).count();
    let size = lab.iter().filter(|&&l| l == partition).count();
    score_from_counts(
        hits,
        nbrs.len(),
        size,
        labels.len(),
        labels.num_partitions(),
        params.alpha_balance,
    )
}

/// Partitions ranked by how many of `vertex`'s neighbors they hold
/// (descending, ties by ascending id), at most `depth` long. Empty for an
/// isolated vertex.
pub fn vertex_preferences(
    vertex: usize,
    labels: &PartitionLabels,
    graph: &CsrGraph,
    depth: usize,
) -> Vec<u32> {
    let lab = labels.as_slice();
    let mut s = PrefScratch::new(labels.num_partitions());
    s.fill(graph.neighbors(vertex).iter().map(|&u| lab[u as usize]));
    s.top(depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(neighbor_labels: &[u32], p: usize) -> (CsrGraph, PartitionLabels) {
        let n = neighbor_labels.len() + 1;
        let edges: Vec<(u32, u32)> = (1..n as u32).map(|d| (0, d)).collect();
        let g = CsrGraph::from_edges(n, &edges).unwrap();
        let mut lab = vec![0u32];
        lab.extend_from_slice(neighbor_labels);
        (g, PartitionLabels::new(lab, p).unwrap())
    }

    #[test]
    fn eq2_on_fig19_multiset() {
        // {2,2,2,0,1,1}, |V| = 8, p = 4, |P_2| = 2.
        let s = score_from_counts(3, 6, 2, 8, 4, 1.1);
        assert!((s - (1.5 - 2.0 / 2.2)).abs() < 1e-12);
        assert!((s - 0.590909).abs() < 1e-6);
    }

    #[test]
    fn empty_terms_score_one() {
        assert_eq!(score_from_counts(0, 5, 0, 10, 2, 1.1), 1.0);
        assert_eq!(score_from_counts(0, 0, 0, 10, 2, 1.1), 1.0);
    }

    #[test]
    fn balanced_full_affinity() {
        let a = 1.1;
        let s = score_from_counts(4, 4, 25, 100, 4, a);
        assert!((s - (2.0 - 1.0 / a)).abs() < 1e-12);
    }

    #[test]
    fn graph_score_matches_counts() {
        let (g, l) = star(&[2, 2, 2, 0, 1, 1], 3);
        let params = PartitionerParams::default();
        let expected = score_from_counts(3, 6, 3, 7, 3, 1.1);
        assert_eq!(partition_score(0, 2, &l, &g, &params), expected);
    }

    #[test]
    fn preferences_fig19() {
        let (g, l) = star(&[2, 2, 2, 0, 1, 1], 3);
        assert_eq!(vertex_preferences(0, &l, &g, 2), vec![2, 1]);
        assert_eq!(vertex_preferences(0, &l, &g, 3), vec![2, 1, 0]);
    }

    #[test]
    fn preferences_tie_break_and_isolated() {
        let (g, l) = star(&[0, 0, 1, 1], 2);
        assert_eq!(vertex_preferences(0, &l, &g, 2), vec![0, 1]);
        assert!(vertex_preferences(1, &l, &g, 2).is_empty());
    }

    #[test]
    fn top_two_agrees_with_top() {
        let mut s = PrefScratch::new(6);
        for parts in [
            vec![5, 5, 1, 1, 3],
            vec![0],
            vec![4, 2, 2, 4, 4, 0, 0, 0],
            vec![],
        ] {
            s.fill(parts.into_iter());
            let t = s.top(2);
            let (a, b) = s.top_two();
            assert_eq!(t.first().copied(), a);
            assert_eq!(t.get(1).copied(), b);
        }
    }
}
