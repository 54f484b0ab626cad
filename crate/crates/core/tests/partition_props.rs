use grinder_core::graph::{generate_kronecker, generate_watts_strogatz, CsrGraph};
use grinder_core::partition::*;
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = CsrGraph> {
    (8usize..80).prop_flat_map(|n| {
        proptest::collection::vec((0..n as u32, 0..n as u32), 0..6 * n).prop_map(move |pairs| {
            let pairs: Vec<(u32, u32)> = pairs.into_iter().filter(|(u, v)| u != v).collect();
            CsrGraph::from_undirected_edges(n, &pairs).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_stay_valid_and_capped(g in arb_graph(), p in 1usize..8, seed in any::<u64>()) {
        let p = p.min(g.num_vertices());
        let params = PartitionerParams { seed, ..Default::default() };
        let out = switching_aware_partition(&g, p, &params).unwrap();
        let cap = params.capacity_limit(g.num_vertices(), p);
        prop_assert_eq!(out.labels.len(), g.num_vertices());
        prop_assert_eq!(out.labels.num_partitions(), p);
        prop_assert!(out.labels.as_slice().iter().all(|&l| (l as usize) < p));
        prop_assert!(out.labels.sizes().into_iter().all(|s| s <= cap));
        for rec in &out.trace {
            prop_assert!(rec.max_partition_size <= cap, "iteration {}", rec.iteration);
        }
        prop_assert!(out.iterations() <= params.max_iters);
    }

    #[test]
    fn same_seed_same_labels(g in arb_graph(), p in 2usize..6, seed in any::<u64>()) {
        let p = p.min(g.num_vertices());
        let params = PartitionerParams { seed, ..Default::default() };
        let a = switching_aware_partition(&g, p, &params).unwrap();
        let b = switching_aware_partition(&g, p, &params).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(a.objective_trace(), b.objective_trace());
    }

    #[test]
    fn memory_within_bound(g in arb_graph(), p in 1usize..8, workers in 1usize..16) {
        let p = p.min(g.num_vertices());
        let m = partitioner_memory_report(&g, p);
        prop_assert!(m.within_bound(g.num_vertices(), g.num_edges(), workers));
    }

    #[test]
    fn quality_matches_labels(g in arb_graph(), p in 1usize..6, seed in any::<u64>()) {
        let p = p.min(g.num_vertices());
        let labels = random_partition(g.num_vertices(), p, seed).unwrap();
        let q = expansion_ratio(&g, &labels).unwrap();
        prop_assert_eq!(q.target_counts.iter().sum::<usize>(), g.num_vertices());
        for (t, r) in q.target_counts.iter().zip(&q.required_counts) {
            prop_assert!(r >= t);
        }
        let sizes = labels.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn beats_random_assignment() {
    let graphs = [
        generate_kronecker(11, 8, 1).unwrap(),
        generate_watts_strogatz(2000, 10, 0.05, 2).unwrap(),
    ];
    for g in &graphs {
        for p in [4, 16] {
            let params = PartitionerParams::default();
            let out = switching_aware_partition(g, p, &params).unwrap();
            let sw = expansion_ratio(g, &out.labels).unwrap().mean_alpha;
            let rnd = expansion_ratio(g, &random_partition(g.num_vertices(), p, 0).unwrap())
                .unwrap()
                .mean_alpha;
            assert!(sw < rnd, "p={p}: {sw} vs {rnd}");
        }
    }
}
