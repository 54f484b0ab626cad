use crate::error::{invalid, Result};
use crate::graph::CsrGraph;
use crate::par;
use crate::partition::{required_sets, PartitionLabels};

/// Edges into one partition's targets, indexed locally: sources are rows of
/// the partition's gather map, destinations are positions in its target list.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTopology {
    /// `offsets[t]..offsets[t+1]` indexes `sources` for target `t`.
    pub offsets: Vec<usize>,
    /// Gather-map rows of in-neighbors, ascending global id per target.
    pub sources: Vec<u32>,
    /// Gather-map row of each target itself (the implicit self-loop).
    pub self_rows: Vec<u32>,
    pub target_in_degree: Vec<u32>,
    /// Out-degree of every gather-map row in the whole graph.
    pub source_out_degree: Vec<u32>,
}

impl LocalTopology {
    pub fn num_targets(&self) -> usize {
        self.self_rows.len()
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    #[inline]
    pub fn in_rows(&self, t: usize) -> &[u32] {
        &self.sources[self.offsets[t]..self.offsets[t + 1]]
    }

    /// Size of this topology as a CSR on storage: u64 offsets, u32 indices.
    pub fn storage_bytes(&self) -> u64 {
        (self.num_targets() as u64 + 1) * 8 + self.num_edges() as u64 * 4
    }
}

/// Everything the engine needs to process the graph one partition at a time.
#[derive(Clone, Debug)]
pub struct PartitionPlan {
    pub labels: PartitionLabels,
    pub num_vertices: usize,
    pub num_edges: usize,
    /// Owned vertices of each partition, ascending.
    pub targets: Vec<Vec<u32>>,
    /// Vertices whose previous-layer rows a partition reads, ordered by
    /// (owning partition, id).
    pub gather_maps: Vec<Vec<u32>>,
    pub topologies: Vec<LocalTopology>,
    /// `(q, r_pq)`: how many gather rows of partition `p` partition `q` owns,
    /// ascending `q`, zero counts omitted.
    pub dependencies: Vec<Vec<(u32, u32)>>,
    pub empty_partitions: Vec<u32>,
}

impl PartitionPlan {
    pub fn num_partitions(&self) -> usize {
        self.targets.len()
    }

    /// `Σ_p |GA_p|`.
    pub fn total_required(&self) -> usize {
        self.gather_maps.iter().map(Vec::len).sum()
    }

    /// `Σ_p |GA_p| / |V|`, the factor that scales whole-layer gather traffic.
    pub fn weighted_alpha(&self) -> f64 {
        if self.num_vertices == 0 {
            return 0.0;
        }
        self.total_required() as f64 / self.num_vertices as f64
    }

    pub fn alpha(&self, p: usize) -> Option<f64> {
        let t = self.targets[p].len();
        (t > 0).then(|| self.gather_maps[p].len() as f64 / t as f64)
    }

    /// Bytes of all topologies together.
    pub fn topology_bytes(&self) -> u64 {
        self.topologies.iter().map(LocalTopology::storage_bytes).sum()
    }
}

/// Splits `graph` by destination owner and builds per-partition gather maps
/// and local topologies.
pub fn build_partition_plan(graph: &CsrGraph, labels: &PartitionLabels) -> Result<PartitionPlan> {
    let n = graph.num_vertices();
    if labels.len() != n {
        return Err(invalid(format!("{} labels for {n} vertices", labels.len())));
    }
    let incoming = graph.transpose();
    let targets = labels.members();
    let gather_maps = required_sets(graph, labels)?;
    let lab = labels.as_slice();
    let p = labels.num_partitions();

    let topologies = par::map_range_init(
        p,
        || vec![u32::MAX; n],
        |local, j| {
            let gm = &gather_maps[j];
            for (i, &u) in gm.iter().enumerate() {
                local[u as usize] = i as u32;
            }
            let tg = &targets[j];
            let mut offsets = Vec::with_capacity(tg.len() + 1);
            offsets.push(0);
            let mut sources = Vec::new();
            let mut self_rows = Vec::with_capacity(tg.len());
            let mut target_in_degree = Vec::with_capacity(tg.len());
            for &v in tg {
                let nb = incoming.neighbors(v as usize);
                sources.extend(nb.iter().map(|&u| local[u as usize]));
                offsets.push(sources.len());
                self_rows.push(local[v as usize]);
                target_in_degree.push(nb.len() as u32);
            }
            let source_out_degree = gm.iter().map(|&u| graph.degree(u as usize) as u32).collect();
            for &u in gm {
                local[u as usize] = u32::MAX;
            }
            LocalTopology {
                offsets,
                sources,
                self_rows,
                target_in_degree,
                source_out_degree,
            }
        },
    );

    let dependencies = gather_maps
        .iter()
        .map(|gm| {
            let mut deps: Vec<(u32, u32)> = Vec::new();
            for &u in gm {
                let q = lab[u as usize];
                match deps.last_mut() {
                    Some((last, c)) if *last == q => *c += 1,
                    _ => deps.push((q, 1)),
                }
            }
            deps
        })
        .collect();

    Ok(PartitionPlan {
        empty_partitions: labels.empty_partitions(),
        labels: labels.clone(),
        num_vertices: n,
        num_edges: graph.num_edges(),
        targets,
        gather_maps,
        topologies,
        dependencies,
    })
}
