use crate::error::Result;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    GpuHost,
    HostStorage,
    /// Direct path used by bypassed transfers.
    GpuStorage,
}

impl Link {
    pub const ALL: [Link; 3] = [Link::GpuHost, Link::HostStorage, Link::GpuStorage];

    pub fn name(self) -> &'static str {
        match self {
            Self::GpuHost => "gpu_host",
            Self::HostStorage => "host_storage",
            Self::GpuStorage => "gpu_storage",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Gpu,
    Host,
    Storage,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Gpu, Tier::Host, Tier::Storage];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gpu => "gpu",
            Self::Host => "host",
            Self::Storage => "storage",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Loss,
    Backward,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Loss => "loss",
            Self::Backward => "backward",
        }
    }
}

/// What a transfer carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Activation,
    Gradient,
    Snapshot,
    Intermediate,
    Topology,
}

/// Where in the schedule an event happened. `layer` is 1-based (the layer
/// that produces `A^layer`); `partition` is `None` for layer-wide events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Stage {
    pub epoch: usize,
    pub phase: Phase,
    pub layer: usize,
    pub partition: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transfer {
    pub stage: Stage,
    pub link: Link,
    pub kind: Kind,
    /// Logical bytes moved.
    pub bytes: u64,
    /// Bytes the device is charged, after rounding vertex-granular reads up
    /// to whole pages. Equal to `bytes` otherwise.
    pub charged: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    /// Dependency lookups served from the host cache.
    pub hits: u64,
    pub misses: u64,
    /// Bytes of required rows served by hits.
    pub reuse_bytes: u64,
    /// Bytes of required rows that missed.
    pub miss_bytes: u64,
    /// Bytes actually read from storage into the cache.
    pub loaded_bytes: u64,
}

impl CacheStats {
    /// Required bytes saved by the cache, net of whole-partition overfetch:
    /// `reuse − (loaded − miss)`. Storage reads equal
    /// `required − cache_hit_bytes`.
    pub fn cache_hit_bytes(&self) -> i64 {
        self.reuse_bytes as i64 - (self.loaded_bytes as i64 - self.miss_bytes as i64)
    }

    fn add(&mut self, o: &CacheStats) {
        self.hits += o.hits;
        self.misses += o.misses;
        self.reuse_bytes += o.reuse_bytes;
        self.miss_bytes += o.miss_bytes;
        self.loaded_bytes += o.loaded_bytes;
    }
}

/// Everything a simulated run moved, held and computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IoLedger {
    pub transfers: Vec<Transfer>,
    /// Floating-point work per stage.
    pub compute: BTreeMap<Stage, f64>,
    /// Cache statistics keyed by `(epoch, phase, layer)`.
    pub cache: BTreeMap<(usize, Phase, usize), CacheStats>,
    resident: [u64; 3],
    peak: [u64; 3],
    /// Largest per-partition host staging buffer (two partition slots).
    pub staging_peak: u64,
    /// Set when a layer-granular cache had to fall back to partitions.
    pub degraded_to_partition: bool,
    /// Sum of the modeled stage times, filled in at the end of a run.
    pub modeled_time: f64,
}

impl IoLedger {
    pub(crate) fn record(&mut self, stage: Stage, link: Link, kind: Kind, bytes: u64, charged: u64) {
        if bytes == 0 && charged == 0 {
            return;
        }
        self.transfers.push(Transfer {
            stage,
            link,
            kind,
            bytes,
            charged,
        });
    }

    pub(crate) fn add_flops(&mut self, stage: Stage, flops: f64) {
        *self.compute.entry(stage).or_insert(0.0) += flops;
    }

    pub(crate) fn cache_mut(&mut self, epoch: usize, phase: Phase, layer: usize) -> &mut CacheStats {
        self.cache.entry((epoch, phase, layer)).or_default()
    }

    pub(crate) fn alloc(&mut self, tier: Tier, bytes: u64) -> u64 {
        let i = tier.index();
        self.resident[i] += bytes;
        self.peak[i] = self.peak[i].max(self.resident[i]);
        self.resident[i]
    }

    pub(crate) fn free(&mut self, tier: Tier, bytes: u64) {
        let i = tier.index();
        debug_assert!(self.resident[i] >= bytes, "freeing more than resident on {tier:?}");
        self.resident[i] = self.resident[i].saturating_sub(bytes);
    }

    /// Sets residency to an externally modeled level (used by swap models).
    pub(crate) fn set_resident(&mut self, tier: Tier, bytes: u64) {
        let i = tier.index();
        self.resident[i] = bytes;
        self.peak[i] = self.peak[i].max(bytes);
    }

    pub fn resident(&self, tier: Tier) -> u64 {
        self.resident[tier.index()]
    }

    pub fn peak_residency(&self, tier: Tier) -> u64 {
        self.peak[tier.index()]
    }

    pub fn link_bytes(&self, link: Link) -> u64 {
        self.transfers.iter().filter(|t| t.link == link).map(|t| t.bytes).sum()
    }

    pub fn link_charged(&self, link: Link) -> u64 {
        self.transfers.iter().filter(|t| t.link == link).map(|t| t.charged).sum()
    }

    /// Bytes on `link` during one phase of one layer, optionally leaving out
    /// topology transfers.
    pub fn phase_link_bytes(&self, epoch: usize, phase: Phase, layer: usize, link: Link, with_topology: bool) -> u64 {
        self.transfers
            .iter()
            .filter(|t| {
                t.stage.epoch == epoch
                    && t.stage.phase == phase
                    && t.stage.layer == layer
                    && t.link == link
                    && (with_topology || t.kind != Kind::Topology)
            })
            .map(|t| t.bytes)
            .sum()
    }

    pub fn kind_bytes(&self, link: Link, kind: Kind) -> u64 {
        self.transfers
            .iter()
            .filter(|t| t.link == link && t.kind == kind)
            .map(|t| t.bytes)
            .sum()
    }

    pub fn cache_stats(&self, epoch: usize, phase: Phase, layer: usize) -> CacheStats {
        self.cache.get(&(epoch, phase, layer)).cloned().unwrap_or_default()
    }

    pub fn total_cache(&self) -> CacheStats {
        let mut s = CacheStats::default();
        for c in self.cache.values() {
            s.add(c);
        }
        s
    }

    pub fn hit_rate(&self) -> f64 {
        let s = self.total_cache();
        if s.hits + s.misses == 0 {
            0.0
        } else {
            s.hits as f64 / (s.hits + s.misses) as f64
        }
    }

    /// Appends another run's events (e.g. a later epoch).
    pub fn merge(&mut self, other: IoLedger) {
        self.transfers.extend(other.transfers);
        for (k, v) in other.compute {
            *self.compute.entry(k).or_insert(0.0) += v;
        }
        for (k, v) in other.cache {
            self.cache.entry(k).or_default().add(&v);
        }
        for i in 0..3 {
            self.peak[i] = self.peak[i].max(other.peak[i]);
        }
        self.resident = other.resident;
        self.staging_peak = self.staging_peak.max(other.staging_peak);
        self.degraded_to_partition |= other.degraded_to_partition;
        self.modeled_time += other.modeled_time;
    }

    /// `phase,layer,partition,link,bytes`, one row per transfer in event
    /// order with consecutive rows for the same key merged.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "phase,layer,partition,link,bytes")?;
        let mut pending: Option<(Stage, Link, u64)> = None;
        let flush = |w: &mut W, p: &(Stage, Link, u64)| -> Result<()> {
            let part = p.0.partition.map_or_else(|| "all".to_string(), |x| x.to_string());
            writeln!(w, "{},{},{},{},{}", p.0.phase.name(), p.0.layer, part, p.1.name(), p.2)?;
            Ok(())
        };
        for t in &self.transfers {
            match &mut pending {
                Some((s, l, b)) if *s == t.stage && *l == t.link => *b += t.bytes,
                _ => {
                    if let Some(p) = pending.take() {
                        flush(&mut w, &p)?;
                    }
                    pending = Some((t.stage, t.link, t.bytes));
                }
            }
        }
        if let Some(p) = pending {
            flush(&mut w, &p)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> LedgerSummary {
        let cache = self.total_cache();
        LedgerSummary {
            link_bytes: Link::ALL.iter().map(|&l| (l.name().to_string(), self.link_bytes(l))).collect(),
            link_charged_bytes: Link::ALL.iter().map(|&l| (l.name().to_string(), self.link_charged(l))).collect(),
            peak_residency: Tier::ALL.iter().map(|&t| (t.name().to_string(), self.peak_residency(t))).collect(),
            cache_hits: cache.hits,
            cache_misses: cache.misses,
            hit_rate: self.hit_rate(),
            staging_peak: self.staging_peak,
            degraded_to_partition: self.degraded_to_partition,
            modeled_time: self.modeled_time,
        }
    }
}

/// JSON-friendly totals of a ledger.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct LedgerSummary {
    pub link_bytes: BTreeMap<String, u64>,
    pub link_charged_bytes: BTreeMap<String, u64>,
    pub peak_residency: BTreeMap<String, u64>,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub hit_rate: f64,
    pub staging_peak: u64,
    pub degraded_to_partition: bool,
    pub modeled_time: f64,
}
