use super::CsrGraph;
use crate::error::{invalid, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

/// 2×2 stochastic initiator `[[a, b], [c, d]]` used by the Kronecker
/// generator (row-major quadrant probabilities).
pub const KRONECKER_INITIATOR: [f64; 4] = [0.57, 0.19, 0.19, 0.05];

/// Give up after this many samples per requested edge.
const MAX_DRAWS_PER_EDGE: usize = 64;

/// Undirected stochastic Kronecker graph with `2^scale` vertices.
///
/// Samples edges quadrant by quadrant until `avg_degree * |V| / 2` distinct
/// non-loop pairs exist (or the draw budget runs out), randomly relabels the
/// vertices, and stores both directions.
pub fn generate_kronecker(scale: u32, avg_degree: usize, seed: u64) -> Result<CsrGraph> {
    if !(4..=30).contains(&scale) {
        return Err(invalid(format!("kronecker scale {scale} outside 4..=30")));
    }
    let n = 1usize << scale;
    let max_pairs = n * (n - 1) / 2;
    let target = (avg_degree * n / 2).min(max_pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let [a, b, c, _] = KRONECKER_INITIATOR;
    let mut seen: HashSet<u64> = HashSet::with_capacity(target * 2);
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(target);
    let budget = target.saturating_mul(MAX_DRAWS_PER_EDGE);
    let mut draws = 0usize;
    while pairs.len() < target && draws < budget {
        draws += 1;
        let (mut u, mut v) = (0u32, 0u32);
        for bit in (0..scale).rev() {
            let r: f64 = rng.gen();
            let (du, dv) = if r < a {
                (0, 0)
            } else if r < a + b {
                (0, 1)
            } else if r < a + b + c {
                (1, 0)
            } else {
                (1, 1)
            };
            u |= du << bit;
            v |= dv << bit;
        }
        if u == v {
            continue;
        }
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        if seen.insert(((lo as u64) << 32) | hi as u64) {
            pairs.push((lo, hi));
        }
    }

    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut rng);
    for e in &mut pairs {
        *e = (perm[e.0 as usize], perm[e.1 as usize]);
    }
    Ok(CsrGraph::from_undirected_edges(n, &pairs)?.sorted())
}

/// Undirected Watts–Strogatz small-world graph.
///
/// Starts from a ring lattice where every vertex links to its `mean_degree/2`
/// clockwise neighbors, then rewires each lattice edge with probability
/// `rewire_prob` to a uniformly chosen new endpoint. New endpoints never
/// create loops or duplicates and never push a vertex above `2·mean_degree`,
/// so every degree stays within `[mean_degree/2, 2·mean_degree]`.
pub fn generate_watts_strogatz(
    num_vertices: usize,
    mean_degree: usize,
    rewire_prob: f64,
    seed: u64,
) -> Result<CsrGraph> {
    if !mean_degree.is_multiple_of(2) {
        return Err(invalid("mean degree must be even"));
    }
    if mean_degree >= num_vertices {
        return Err(invalid(format!(
            "mean degree {mean_degree} must be below vertex count {num_vertices}"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(invalid("rewire probability must lie in [0, 1]"));
    }
    let n = num_vertices;
    let half = mean_degree / 2;
    let cap = 2 * mean_degree;
    let mut adj: Vec<Vec<u32>> = vec![Vec::with_capacity(mean_degree + 4); n];
    for u in 0..n {
        for j in 1..=half {
            let v = (u + j) % n;
            adj[u].push(v as u32);
            adj[v].push(u as u32);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 1..=half {
        for u in 0..n {
            if rng.gen::<f64>() >= rewire_prob {
                continue;
            }
            let old = ((u + j) % n) as u32;
            if !adj[u].contains(&old) {
                continue;
            }
            // Bounded retries; keep the lattice edge if no valid endpoint turns up.
            for _ in 0..32 {
                let w = rng.gen_range(0..n) as u32;
                if w as usize == u || adj[u].contains(&w) || adj[w as usize].len() >= cap {
                    continue;
                }
                adj[u].retain(|&x| x != old);
                adj[old as usize].retain(|&x| x as usize != u);
                adj[u].push(w);
                adj[w as usize].push(u as u32);
                break;
            }
        }
    }

    let mut edges = Vec::with_capacity(n * mean_degree);
    for (u, list) in adj.iter().enumerate() {
        for &v in list {
            edges.push((u as u32, v));
        }
    }
    Ok(CsrGraph::from_edges(n, &edges)?.sorted())
}
