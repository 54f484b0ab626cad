//! Host-memory cache models: layer/partition LRU and a per-vertex LRU.

use super::config::CacheGranularity;
use std::collections::{BTreeMap, HashMap};

/// `(layer of A, partition)`.
pub type CacheKey = (usize, u32);

#[derive(Clone, Debug, PartialEq, Eq)]
struct Entry {
    bytes: u64,
    stamp: u64,
}

/// Outcome of [`HostCache::lookup_and_admit`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lookup {
    pub hit: bool,
    /// False when the entry could not be made resident (it streams through).
    pub admitted: bool,
    pub evicted: Vec<CacheKey>,
}

/// Byte-capacity cache of activation partitions. In `LayerLru` mode the
/// victim is the whole least-recently-used layer; in `PartitionLru` mode a
/// single partition.
#[derive(Clone, Debug)]
pub struct HostCache {
    capacity: u64,
    used: u64,
    granularity: CacheGranularity,
    entries: BTreeMap<CacheKey, Entry>,
    clock: u64,
}

impl HostCache {
    pub fn new(capacity: u64, granularity: CacheGranularity) -> Self {
        Self {
            capacity,
            used: 0,
            granularity,
            entries: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn granularity(&self) -> CacheGranularity {
        self.granularity
    }

    pub fn degrade_to_partitions(&mut self) {
        self.granularity = CacheGranularity::PartitionLru;
    }

    pub fn contains(&self, key: CacheKey) -> bool {
        self.entries.contains_key(&key)
    }

    pub fn layer_bytes(&self, layer: usize) -> u64 {
        self.entries
            .range((layer, 0)..=(layer, u32::MAX))
            .map(|(_, e)| e.bytes)
            .sum()
    }

    /// Cached partitions of `layer`, ascending.
    pub fn partitions_of(&self, layer: usize) -> Vec<u32> {
        self.entries.range((layer, 0)..=(layer, u32::MAX)).map(|(k, _)| k.1).collect()
    }

    pub fn touch(&mut self, key: CacheKey) {
        self.clock += 1;
        if let Some(e) = self.entries.get_mut(&key) {
            e.stamp = self.clock;
        }
    }

    pub fn invalidate(&mut self) {
        self.entries.clear();
        self.used = 0;
    }

    pub fn remove(&mut self, key: CacheKey) {
        if let Some(e) = self.entries.remove(&key) {
            self.used -= e.bytes;
        }
    }

    /// Shrinks (or grows) the capacity, evicting LRU victims that no longer
    /// fit.
    pub fn set_capacity(&mut self, capacity: u64) -> Vec<CacheKey> {
        self.capacity = capacity;
        let mut evicted = Vec::new();
        while self.used > self.capacity {
            match self.victim(&|_| false) {
                Some(v) => evicted.extend(self.evict(v)),
                None => break,
            }
        }
        evicted
    }

    /// Victim group under the current granularity, skipping pinned keys.
    fn victim(&self, pinned: &dyn Fn(CacheKey) -> bool) -> Option<Vec<CacheKey>> {
        match self.granularity {
            CacheGranularity::PartitionLru | CacheGranularity::Vertex => self
                .entries
                .iter()
                .filter(|(k, _)| !pinned(**k))
                .min_by_key(|(_, e)| e.stamp)
                .map(|(k, _)| vec![*k]),
            CacheGranularity::LayerLru => {
                let mut layers: BTreeMap<usize, (u64, bool)> = BTreeMap::new();
                for (k, e) in &self.entries {
                    let slot = layers.entry(k.0).or_insert((0, false));
                    slot.0 = slot.0.max(e.stamp);
                    slot.1 |= pinned(*k);
                }
                layers
                    .into_iter()
                    .filter(|(_, (_, p))| !p)
                    .min_by_key(|(_, (s, _))| *s)
                    .map(|(layer, _)| self.entries.range((layer, 0)..=(layer, u32::MAX)).map(|(k, _)| *k).collect())
            }
        }
    }

    fn evict(&mut self, keys: Vec<CacheKey>) -> Vec<CacheKey> {
        for k in &keys {
            self.remove(*k);
        }
        keys
    }

    /// Looks `key` up; on a miss, evicts unpinned LRU victims until `bytes`
    /// fit and admits it. If it cannot fit even after evicting everything
    /// unpinned, nothing is evicted and the entry is not admitted.
    pub fn lookup_and_admit(&mut self, key: CacheKey, bytes: u64, pinned: &dyn Fn(CacheKey) -> bool) -> Lookup {
        if self.contains(key) {
            self.touch(key);
            return Lookup {
                hit: true,
                admitted: true,
                evicted: Vec::new(),
            };
        }
        let evictable: u64 = self
            .entries
            .iter()
            .filter(|(k, _)| !pinned(**k))
            .map(|(_, e)| e.bytes)
            .sum();
        if self.used - evictable + bytes > self.capacity {
            return Lookup::default();
        }
        let mut evicted = Vec::new();
        while self.used + bytes > self.capacity {
            let v = self.victim(pinned).expect("evictable bytes cover the shortfall");
            evicted.extend(self.evict(v));
        }
        self.clock += 1;
        self.entries.insert(
            key,
            Entry {
                bytes,
                stamp: self.clock,
            },
        );
        self.used += bytes;
        Lookup {
            hit: false,
            admitted: true,
            evicted,
        }
    }
}

/// LRU over individual vertex records of one or more layers.
#[derive(Clone, Debug, Default)]
pub struct VertexCache {
    capacity_records: u64,
    stamps: HashMap<(usize, u32), u64>,
    order: BTreeMap<u64, (usize, u32)>,
    clock: u64,
}

impl VertexCache {
    pub fn new(capacity_records: u64) -> Self {
        Self {
            capacity_records,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn contains(&self, layer: usize, v: u32) -> bool {
        self.stamps.contains_key(&(layer, v))
    }

    pub fn invalidate(&mut self) {
        self.stamps.clear();
        self.order.clear();
    }

    pub fn set_capacity(&mut self, capacity_records: u64) {
        self.capacity_records = capacity_records;
        while self.stamps.len() as u64 > self.capacity_records {
            self.pop_lru();
        }
    }

    fn pop_lru(&mut self) {
        if let Some((_, key)) = self.order.pop_first() {
            self.stamps.remove(&key);
        }
    }

    /// Marks `v` most recently used, admitting it (and evicting the LRU
    /// record) if needed. Returns whether it was already cached.
    pub fn access(&mut self, layer: usize, v: u32) -> bool {
        self.clock += 1;
        if let Some(old) = self.stamps.insert((layer, v), self.clock) {
            self.order.remove(&old);
            self.order.insert(self.clock, (layer, v));
            return true;
        }
        self.order.insert(self.clock, (layer, v));
        if self.stamps.len() as u64 > self.capacity_records {
            self.pop_lru();
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none(_: CacheKey) -> bool {
        false
    }

    #[test]
    fn layer_lru_evicts_oldest_layer() {
        let mut c = HostCache::new(20, CacheGranularity::LayerLru);
        for layer in 0..2 {
            for p in 0..2 {
                assert!(!c.lookup_and_admit((layer, p), 5, &none).hit);
            }
        }
        let out = c.lookup_and_admit((2, 0), 5, &none);
        assert_eq!(out.evicted, vec![(0, 0), (0, 1)]);
        assert!(c.contains((1, 0)) && c.contains((2, 0)));
        assert!(!c.contains((0, 0)));
    }

    #[test]
    fn partition_reuse_loads_one() {
        // Cached {0, 2}, capacity two partitions; the next partition needs
        // {1, 2}: reuse 2, load 1, evict 0.
        let mut c = HostCache::new(2, CacheGranularity::PartitionLru);
        c.lookup_and_admit((0, 0), 1, &none);
        c.lookup_and_admit((0, 2), 1, &none);
        let needed = [2u32, 1];
        let pinned = |k: CacheKey| needed.contains(&k.1);
        let mut loads = 0;
        for q in needed {
            let r = c.lookup_and_admit((0, q), 1, &pinned);
            if !r.hit {
                loads += 1;
                assert_eq!(r.evicted, vec![(0, 0)]);
            }
        }
        assert_eq!(loads, 1);
        assert_eq!(c.partitions_of(0), vec![1, 2]);
    }

    #[test]
    fn oversize_entry_streams() {
        let mut c = HostCache::new(4, CacheGranularity::PartitionLru);
        c.lookup_and_admit((0, 0), 3, &none);
        let r = c.lookup_and_admit((0, 1), 2, &|k| k == (0, 0));
        assert!(!r.admitted && r.evicted.is_empty());
        assert!(c.contains((0, 0)));
    }

    #[test]
    fn shrinking_capacity_evicts() {
        let mut c = HostCache::new(10, CacheGranularity::PartitionLru);
        c.lookup_and_admit((0, 0), 4, &none);
        c.lookup_and_admit((0, 1), 4, &none);
        c.touch((0, 0));
        assert_eq!(c.set_capacity(5), vec![(0, 1)]);
        assert_eq!(c.used(), 4);
    }

    #[test]
    fn vertex_lru() {
        let mut c = VertexCache::new(2);
        assert!(!c.access(0, 1));
        assert!(!c.access(0, 2));
        assert!(c.access(0, 1));
        assert!(!c.access(0, 3));
        assert!(!c.contains(0, 2));
        assert!(c.contains(0, 1));
        assert_eq!(c.len(), 2);
    }
}
