use crate::train::PartitionPlan;

/// Static greedy partition order. Each step picks the unscheduled partition
/// whose dependencies overlap the modeled cache the most (in rows), ties to
/// the lower id, then admits its dependencies into a modeled
/// partition-granular LRU of `capacity_rows`. `cached` is the initial cache
/// content, least recently used first.
pub fn schedule_partitions(plan: &PartitionPlan, cached: &[u32], capacity_rows: u64) -> Vec<u32> {
    let p = plan.num_partitions();
    let size = |q: u32| plan.targets[q as usize].len() as u64;
    let mut lru: Vec<u32> = cached.to_vec();
    let mut remaining: Vec<u32> = (0..p as u32).collect();
    let mut order = Vec::with_capacity(p);
    while !remaining.is_empty() {
        let (best_at, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let overlap: u64 = plan.dependencies[c as usize]
                    .iter()
                    .filter(|(q, _)| lru.contains(q))
                    .map(|&(_, r)| r as u64)
                    .sum();
                (i, overlap)
            })
            .fold((0, None), |acc, (i, o)| match acc.1 {
                Some(best) if best >= o => acc,
                _ => (i, Some(o)),
            });
        let chosen = remaining.remove(best_at);
        order.push(chosen);

        let deps: Vec<u32> = plan.dependencies[chosen as usize].iter().map(|d| d.0).collect();
        for &q in &deps {
            lru.retain(|&x| x != q);
            lru.push(q);
        }
        let mut used: u64 = lru.iter().map(|&q| size(q)).sum();
        let mut i = 0;
        while used > capacity_rows && i < lru.len() {
            if deps.contains(&lru[i]) {
                i += 1;
            } else {
                used -= size(lru[i]);
                lru.remove(i);
            }
        }
    }
    order
}
