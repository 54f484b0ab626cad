use super::{PartitionLabels, PartitionerParams};
use crate::error::{invalid, Result};
use crate::graph::CsrGraph;
use crate::par;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionQuality {
    pub num_partitions: usize,
    /// `|required| / |targets|`; `None` for an empty partition.
    pub per_partition_alpha: Vec<Option<f64>>,
    /// Arithmetic mean of the defined per-partition ratios.
    pub mean_alpha: f64,
    /// `Σ_p |required_p| / |V|`, the ratio that scales whole-graph traffic.
    pub weighted_alpha: f64,
    pub target_counts: Vec<usize>,
    pub required_counts: Vec<usize>,
    /// `[j][q]` = vertices of partition `q` required by partition `j`.
    pub dependency_matrix: Vec<Vec<u64>>,
    /// `max_j |P_j| / (|V| / p)`.
    pub max_balance: f64,
    pub objective: f64,
    pub empty_partitions: Vec<u32>,
}

impl PartitionQuality {
    /// For every row, the share of cross-partition demand served by the
    /// `top` largest foreign source partitions. Rows without foreign demand
    /// are skipped.
    pub fn dependency_concentration(&self, top: usize) -> Vec<f64> {
        self.dependency_matrix
            .iter()
            .enumerate()
            .filter_map(|(j, row)| {
                let mut foreign: Vec<u64> = row
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != j)
                    .map(|(_, &c)| c)
                    .collect();
                let total: u64 = foreign.iter().sum();
                if total == 0 {
                    return None;
                }
                foreign.sort_unstable_by(|a, b| b.cmp(a));
                let head: u64 = foreign.iter().take(top).sum();
                Some(head as f64 / total as f64)
            })
            .collect()
    }
}

/// Required vertices of every partition: its targets plus their
/// in-neighbors, deduplicated and ordered by (owning partition, id).
pub(crate) fn required_sets(graph: &CsrGraph, labels: &PartitionLabels) -> Result<Vec<Vec<u32>>> {
    let n = graph.num_vertices();
    if labels.len() != n {
        return Err(invalid(format!("{} labels for {n} vertices", labels.len())));
    }
    let incoming = graph.transpose();
    let members = labels.members();
    let lab = labels.as_slice();
    Ok(par::map_range_init(
        labels.num_partitions(),
        || vec![u32::MAX; n],
        |seen, j| {
            let mut req = Vec::new();
            for &v in &members[j] {
                for &u in std::iter::once(&v).chain(incoming.neighbors(v as usize)) {
                    if seen[u as usize] != j as u32 {
                        seen[u as usize] = j as u32;
                        req.push(u);
                    }
                }
            }
            req.sort_unstable_by_key(|&u| (lab[u as usize], u));
            // Reset so a later call reusing this scratch starts clean.
            for &u in &req {
                seen[u as usize] = u32::MAX;
            }
            req
        },
    ))
}

/// `Σ_v 1 + N(v, own)/N(v, ·) − |P_own| / (α_balance·|V|/p)`, with the
/// neighbor term taken as zero for isolated vertices.
pub fn partition_objective(graph: &CsrGraph, labels: &PartitionLabels, alpha_balance: f64) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let lab = labels.as_slice();
    let affinity = par::ordered_sum(n, |v| {
        let nb = graph.neighbors(v);
        if nb.is_empty() {
            return 0.0;
        }
        nb.iter().filter(|&&u| lab[u as usize] == lab[v]).count() as f64 / nb.len() as f64
    });
    let unit = alpha_balance * n as f64 / labels.num_partitions() as f64;
    let penalty: f64 = labels
        .sizes()
        .iter()
        .map(|&s| s as f64 * s as f64 / unit)
        .sum();
    n as f64 + affinity - penalty
}

/// Quality of `labels` with the default balance slack in the objective.
pub fn expansion_ratio(graph: &CsrGraph, labels: &PartitionLabels) -> Result<PartitionQuality> {
    partition_quality(graph, labels, PartitionerParams::default().alpha_balance)
}

pub fn partition_quality(
    graph: &CsrGraph,
    labels: &PartitionLabels,
    alpha_balance: f64,
) -> Result<PartitionQuality> {
    let p = labels.num_partitions();
    let n = labels.len();
    let req = required_sets(graph, labels)?;
    let lab = labels.as_slice();
    let target_counts = labels.sizes();
    let required_counts: Vec<usize> = req.iter().map(Vec::len).collect();

    let dependency_matrix = req
        .iter()
        .map(|r| {
            let mut row = vec![0u64; p];
            for &u in r {
                row[lab[u as usize] as usize] += 1;
            }
            row
        })
        .collect();

    let per_partition_alpha: Vec<Option<f64>> = target_counts
        .iter()
        .zip(&required_counts)
        .map(|(&t, &r)| (t > 0).then(|| r as f64 / t as f64))
        .collect();
    let defined: Vec<f64> = per_partition_alpha.iter().flatten().copied().collect();
    let mean_alpha = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let weighted_alpha = if n == 0 {
        0.0
    } else {
        required_counts.iter().sum::<usize>() as f64 / n as f64
    };
    let max_balance = if n == 0 {
        0.0
    } else {
        *target_counts.iter().max().unwrap() as f64 / (n as f64 / p as f64)
    };

    Ok(PartitionQuality {
        num_partitions: p,
        per_partition_alpha,
        mean_alpha,
        weighted_alpha,
        empty_partitions: labels.empty_partitions(),
        target_counts,
        required_counts,
        dependency_matrix,
        max_balance,
        objective: partition_objective(graph, labels, alpha_balance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // a..h = 0..7; partition 0 = {a,b}, required {a,b,e,g,h}.
    fn fig5c() -> (CsrGraph, PartitionLabels) {
        let (a, b, e, g, h) = (0, 1, 4, 6, 7);
        let g = CsrGraph::from_undirected_edges(8, &[(a, e), (b, g), (a, h), (b, a)]).unwrap();
        let l = PartitionLabels::new(vec![0, 0, 1, 1, 2, 2, 3, 3], 4).unwrap();
        (g, l)
    }

    #[test]
    fn fig5c_alpha_and_touched_partitions() {
        let (g, l) = fig5c();
        let q = expansion_ratio(&g, &l).unwrap();
        assert_eq!(q.per_partition_alpha[0], Some(2.5));
        let touched = q.dependency_matrix[0].iter().filter(|&&c| c > 0).count();
        assert_eq!(touched, 3);
        assert_eq!(q.dependency_matrix[0], vec![2, 0, 1, 2]);
        let req = required_sets(&g, &l).unwrap();
        assert_eq!(req[0], vec![0, 1, 4, 6, 7]);
    }

    #[test]
    fn single_partition_alpha_is_one() {
        let (g, _) = fig5c();
        let q = expansion_ratio(&g, &PartitionLabels::single(8)).unwrap();
        assert_eq!(q.mean_alpha, 1.0);
        assert_eq!(q.weighted_alpha, 1.0);
        assert_eq!(q.max_balance, 1.0);
    }

    #[test]
    fn aligned_components_alpha_one() {
        let g = CsrGraph::from_undirected_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let l = PartitionLabels::new(vec![1, 1, 1, 0, 0, 0], 2).unwrap();
        let q = expansion_ratio(&g, &l).unwrap();
        assert!(q.per_partition_alpha.iter().all(|a| *a == Some(1.0)));
    }

    #[test]
    fn empty_partition_is_flagged_and_excluded() {
        let g = CsrGraph::from_undirected_edges(4, &[(0, 1), (2, 3), (1, 2)]).unwrap();
        let l = PartitionLabels::new(vec![0, 0, 2, 2], 3).unwrap();
        let q = expansion_ratio(&g, &l).unwrap();
        assert_eq!(q.empty_partitions, vec![1]);
        assert_eq!(q.per_partition_alpha[1], None);
        assert_eq!(q.mean_alpha, 1.5);
    }

    #[test]
    fn diagonal_counts_internal_required() {
        let (g, l) = fig5c();
        let q = expansion_ratio(&g, &l).unwrap();
        for j in 0..4 {
            assert_eq!(q.dependency_matrix[j][j] as usize, q.target_counts[j]);
            assert!(q.per_partition_alpha[j].unwrap() >= 1.0);
        }
    }

    #[test]
    fn required_sets_follow_in_neighbors() {
        // 0 -> 1 only: partition of 1 requires 0, partition of 0 does not need 1.
        let g = CsrGraph::from_edges(2, &[(0, 1)]).unwrap();
        let l = PartitionLabels::new(vec![0, 1], 2).unwrap();
        let req = required_sets(&g, &l).unwrap();
        assert_eq!(req, vec![vec![0], vec![0, 1]]);
    }

    #[test]
    fn objective_matches_score_sum() {
        let (g, l) = fig5c();
        let params = PartitionerParams::default();
        let direct: f64 = (0..8)
            .map(|v| super::super::partition_score(v, l.get(v), &l, &g, &params))
            .sum();
        assert!((partition_objective(&g, &l, 1.1) - direct).abs() < 1e-12);
    }
}
