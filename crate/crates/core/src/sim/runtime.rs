//! Event replay of one training schedule through the memory hierarchy.
//!
//! The [`Simulator`] walks forward layers ascending, the loss, then backward
//! layers descending, one partition at a time, charging every movement to a
//! link and tracking residency. An [`Executor`] is called at each step to do
//! the actual math (or nothing, for pure simulation), so the ledger of a
//! training run and of a dry run are the same.

use super::amplification::page_charge;
use super::cache::{CacheKey, HostCache, VertexCache};
use super::config::{CacheGranularity, CacheMode, HierarchyConfig, PolicyKind, PolicySpec};
use super::ledger::{IoLedger, Kind, Link, Phase, Stage, Tier};
use super::schedule::schedule_partitions;
use super::time::modeled_time;
use crate::error::{invalid, Error, Result};
use crate::train::PartitionPlan;

/// Layer widths `[in, hidden…, classes]` plus whether the aggregation admits
/// snapshotting the aggregated intermediate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub dims: Vec<usize>,
    pub intermediate_snapshot_ok: bool,
}

impl ModelShape {
    pub fn new(dims: Vec<usize>) -> Self {
        Self {
            dims,
            intermediate_snapshot_ok: true,
        }
    }

    /// `layers` layers, every activation `width` wide.
    pub fn uniform(width: usize, layers: usize) -> Self {
        Self::new(vec![width; layers + 1])
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }
}

/// Where a backward step gets its gathered input from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardSource {
    /// Re-gather from cached previous-layer activations.
    Regather,
    /// A stored copy of the gathered input.
    GatherSnapshot,
    /// A stored copy of the aggregated intermediate.
    IntermediateSnapshot,
}

/// What the hierarchy has made available for one partition step.
#[derive(Clone, Debug)]
pub struct Access {
    /// Previous-layer partitions currently readable from host memory.
    pub resident: Vec<bool>,
    pub source: BackwardSource,
}

/// Math hooks. `layer` is 0-based here: layer `l` reads `A^l` and writes
/// `A^{l+1}`.
pub trait Executor {
    fn forward(&mut self, _epoch: usize, _layer: usize, _partition: usize, _access: &Access) -> Result<()> {
        Ok(())
    }
    fn loss(&mut self, _epoch: usize) -> Result<()> {
        Ok(())
    }
    fn backward(&mut self, _epoch: usize, _layer: usize, _partition: usize, _access: &Access) -> Result<()> {
        Ok(())
    }
    fn end_backward_layer(&mut self, _epoch: usize, _layer: usize) -> Result<()> {
        Ok(())
    }
}

/// Executor that only lets the ledger run.
pub struct NoopExecutor;

impl Executor for NoopExecutor {}

/// Running overflow of a swap window within one phase-layer.
#[derive(Default)]
struct SwapWindow {
    limit: u64,
    used: u64,
}

impl SwapWindow {
    fn spill(&mut self, bytes: u64) -> u64 {
        let before = self.used.saturating_sub(self.limit);
        self.used += bytes;
        self.used.saturating_sub(self.limit) - before
    }
}

pub struct Simulator<'a> {
    plan: &'a PartitionPlan,
    shape: ModelShape,
    policy: PolicySpec,
    config: HierarchyConfig,
    ledger: IoLedger,
    cache: HostCache,
    vcache: VertexCache,
    /// Input features and topology, always on storage.
    dataset_bytes: u64,
    /// Host bytes held outside the cache (gradient buffers).
    host_held: u64,
    /// Logical demand of swap-based policies, across host and swap.
    demand: u64,
    window: SwapWindow,
    /// Warm mode keeps `∇A` host-resident between layers.
    grads_resident: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(plan: &'a PartitionPlan, shape: ModelShape, policy: PolicySpec, config: HierarchyConfig) -> Result<Self> {
        config.validate()?;
        if shape.num_layers() == 0 {
            return Err(invalid("model needs at least one layer"));
        }
        if plan.num_partitions() == 0 {
            return Err(invalid("plan has no partitions"));
        }
        if policy.kind == PolicyKind::HongtuIntermediate && !shape.intermediate_snapshot_ok {
            return Err(invalid("HONGTU_INTERMEDIATE needs an aggregation that admits intermediate snapshots"));
        }
        let b = config.bytes_per_value;
        let n = plan.num_vertices as u64;
        let dataset_bytes = n * shape.dims[0] as u64 * b + plan.topology_bytes();
        if dataset_bytes > config.storage_capacity {
            return Err(Error::Capacity {
                tier: "storage",
                required: dataset_bytes,
                capacity: config.storage_capacity,
            });
        }
        let largest_grad = shape.dims[1..].iter().map(|&d| n * d as u64 * b).max().unwrap_or(0);
        let grads_resident = policy.kind == PolicyKind::Grinnder
            && policy.cache_mode == CacheMode::Warm
            && config.host_capacity >= 2 * largest_grad;
        let cache = HostCache::new(config.host_capacity, policy.cache_granularity);
        Ok(Self {
            plan,
            shape,
            policy,
            config,
            ledger: IoLedger::default(),
            cache,
            vcache: VertexCache::new(0),
            dataset_bytes,
            host_held: 0,
            demand: 0,
            window: SwapWindow::default(),
            grads_resident,
        })
    }

    pub fn ledger(&self) -> &IoLedger {
        &self.ledger
    }

    /// Stops the run and returns the ledger with its modeled time filled in.
    pub fn finish(mut self) -> IoLedger {
        self.ledger.modeled_time = modeled_time(&self.ledger, &self.config);
        self.ledger
    }

    fn b(&self) -> u64 {
        self.config.bytes_per_value
    }

    fn row(&self, layer: usize) -> u64 {
        self.shape.dims[layer] as u64 * self.b()
    }

    fn rows(&self, p: usize) -> u64 {
        self.plan.targets[p].len() as u64
    }

    fn layer_bytes(&self, layer: usize) -> u64 {
        self.plan.num_vertices as u64 * self.row(layer)
    }

    fn gather_bytes(&self, layer: usize, p: usize) -> u64 {
        self.plan.gather_maps[p].len() as u64 * self.row(layer)
    }

    fn charge(&mut self, stage: Stage, link: Link, kind: Kind, bytes: u64) {
        self.charge_paged(stage, link, kind, bytes, bytes);
    }

    fn charge_paged(&mut self, stage: Stage, link: Link, kind: Kind, bytes: u64, charged: u64) {
        if link == Link::GpuHost && stage.partition.is_some() {
            self.ledger.staging_peak = self.ledger.staging_peak.max(2 * bytes);
        }
        self.ledger.record(stage, link, kind, bytes, charged);
    }

    /// Host-link transfer under a swap model: overflow beyond the window
    /// also crosses the storage link.
    fn charge_swapped(&mut self, stage: Stage, kind: Kind, bytes: u64) {
        self.charge(stage, Link::GpuHost, kind, bytes);
        let spill = self.window.spill(bytes);
        self.charge(stage, Link::HostStorage, kind, spill);
    }

    fn open_window(&mut self) {
        let pinned = match self.policy.kind {
            PolicyKind::HongtuIntermediate => (0..self.shape.num_layers()).map(|l| self.layer_bytes(l)).sum(),
            _ => 0,
        };
        self.window = SwapWindow {
            limit: self.config.host_capacity.saturating_sub(pinned),
            used: 0,
        };
    }

    fn store_alloc(&mut self, bytes: u64) -> Result<()> {
        let now = self.ledger.resident(Tier::Storage) + bytes;
        if now + self.dataset_bytes > self.config.storage_capacity {
            return Err(Error::Capacity {
                tier: "storage",
                required: now + self.dataset_bytes,
                capacity: self.config.storage_capacity,
            });
        }
        self.ledger.alloc(Tier::Storage, bytes);
        Ok(())
    }

    fn sync_host(&mut self) {
        let cached = match self.policy.cache_granularity {
            CacheGranularity::Vertex => 0,
            _ => self.cache.used(),
        };
        self.ledger.set_resident(Tier::Host, cached + self.host_held);
    }

    fn sync_demand(&mut self) {
        let host = self.demand.min(self.config.host_capacity);
        self.ledger.set_resident(Tier::Host, host);
        self.ledger.set_resident(Tier::Storage, self.demand - host);
    }

    fn gpu_step(&mut self, working_set: u64) -> Result<()> {
        if working_set > self.config.gpu_capacity {
            return Err(Error::Capacity {
                tier: "gpu",
                required: working_set,
                capacity: self.config.gpu_capacity,
            });
        }
        self.ledger.alloc(Tier::Gpu, working_set);
        self.ledger.free(Tier::Gpu, working_set);
        Ok(())
    }

    fn flops(&self, layer: usize, p: usize, backward: bool) -> f64 {
        let n = self.rows(p) as f64;
        let e = self.plan.topologies[p].num_edges() as f64 + n;
        let (di, dout) = (self.shape.dims[layer] as f64, self.shape.dims[layer + 1] as f64);
        let agg = 2.0 * e * di;
        let dense = 2.0 * n * di * dout;
        if backward {
            3.0 * dense + 2.0 * agg
        } else {
            agg + dense
        }
    }

    fn resident_for(&self, p: usize) -> Vec<bool> {
        let mut r = vec![false; self.plan.num_partitions()];
        for &(q, _) in &self.plan.dependencies[p] {
            r[q as usize] = true;
        }
        r
    }

    /// Prepares the cache for reading activation layer `layer`: cold mode
    /// empties it, layer granularity bulk-loads the layer when it fits.
    /// Returns the partition order.
    fn begin_cached_layer(&mut self, epoch: usize, phase: Phase, layer: usize, capacity: u64) -> Vec<u32> {
        let row = self.row(layer);
        let stage_layer = layer + 1;
        if self.policy.cache_mode == CacheMode::Cold {
            self.cache.invalidate();
            self.vcache.invalidate();
        }
        if self.policy.cache_granularity == CacheGranularity::Vertex {
            self.vcache.set_capacity(capacity / row.max(1));
            self.sync_host();
            return (0..self.plan.num_partitions() as u32).collect();
        }
        self.cache.set_capacity(capacity);
        if self.cache.granularity() == CacheGranularity::LayerLru {
            if self.layer_bytes(layer) > capacity {
                self.cache.degrade_to_partitions();
                self.ledger.degraded_to_partition = true;
            } else {
                let stage = Stage {
                    epoch,
                    phase,
                    layer: stage_layer,
                    partition: None,
                };
                for q in 0..self.plan.num_partitions() {
                    let bytes = self.rows(q) * row;
                    if bytes == 0 {
                        continue;
                    }
                    let got = self.cache.lookup_and_admit((layer, q as u32), bytes, &|k: CacheKey| k.0 == layer);
                    if !got.hit {
                        self.ledger.cache_mut(epoch, phase, stage_layer).loaded_bytes += bytes;
                        self.charge(stage, Link::HostStorage, Kind::Activation, bytes);
                    }
                }
                self.sync_host();
                return (0..self.plan.num_partitions() as u32).collect();
            }
        }
        self.sync_host();
        let mut cached = self.cache.partitions_of(layer);
        cached.sort_unstable();
        let cap_rows = capacity / row.max(1);
        schedule_partitions(self.plan, &cached, cap_rows)
    }

    /// Brings partition `p`'s dependencies on activation layer `layer` into
    /// host memory, counting hits, misses and storage reads.
    fn load_dependencies(&mut self, stage: Stage, layer: usize, p: usize) {
        let row = self.row(layer);
        let key = (stage.epoch, stage.phase, stage.layer);
        if self.policy.cache_granularity == CacheGranularity::Vertex {
            let mut missing = Vec::new();
            let (mut hits, mut misses) = (0u64, 0u64);
            for &u in &self.plan.gather_maps[p] {
                if self.vcache.access(layer, u) {
                    hits += 1;
                } else {
                    misses += 1;
                    missing.push(u);
                }
            }
            missing.sort_unstable();
            let charged = page_charge(&missing, row, self.config.page_size);
            let s = self.ledger.cache_mut(key.0, key.1, key.2);
            s.hits += hits;
            s.misses += misses;
            s.reuse_bytes += hits * row;
            s.miss_bytes += misses * row;
            s.loaded_bytes += misses * row;
            self.charge_paged(stage, Link::HostStorage, Kind::Activation, misses * row, charged);
            let held = self.vcache.len() as u64 * row;
            self.ledger.set_resident(Tier::Host, held + self.host_held);
            return;
        }
        let plan = self.plan;
        let deps: Vec<u32> = plan.dependencies[p].iter().map(|d| d.0).collect();
        let layer_mode = self.cache.granularity() == CacheGranularity::LayerLru;
        let pinned = |k: CacheKey| if layer_mode { k.0 == layer } else { k.0 == layer && deps.contains(&k.1) };
        for &(q, r) in &plan.dependencies[p] {
            let bytes = self.rows(q as usize) * row;
            let got = self.cache.lookup_and_admit((layer, q), bytes, &pinned);
            let s = self.ledger.cache_mut(key.0, key.1, key.2);
            if got.hit {
                s.hits += 1;
                s.reuse_bytes += r as u64 * row;
            } else {
                s.misses += 1;
                s.miss_bytes += r as u64 * row;
                s.loaded_bytes += bytes;
                self.charge(stage, Link::HostStorage, Kind::Activation, bytes);
            }
        }
        self.sync_host();
    }

    /// Runs one epoch (1-based) through `exec`.
    pub fn run_epoch(&mut self, epoch: usize, exec: &mut dyn Executor) -> Result<()> {
        match self.policy.kind {
            PolicyKind::Grinnder => self.grinnder_epoch(epoch, exec),
            PolicyKind::HongtuSwap | PolicyKind::HongtuIntermediate => self.swap_epoch(epoch, exec),
            PolicyKind::Naive => self.naive_epoch(epoch, exec),
        }
    }

    fn grinnder_epoch(&mut self, epoch: usize, exec: &mut dyn Executor) -> Result<()> {
        let layers = self.shape.num_layers();
        let warm = self.policy.cache_mode == CacheMode::Warm;

        for l in 0..layers {
            let order = self.begin_cached_layer(epoch, Phase::Forward, l, self.config.host_capacity);
            for &p in &order {
                let p = p as usize;
                let stage = Stage {
                    epoch,
                    phase: Phase::Forward,
                    layer: l + 1,
                    partition: Some(p as u32),
                };
                self.load_dependencies(stage, l, p);
                let g = self.gather_bytes(l, p);
                let o = self.rows(p) * self.row(l + 1);
                let t = self.plan.topologies[p].storage_bytes();
                self.charge(stage, Link::GpuHost, Kind::Activation, g);
                self.charge(stage, Link::GpuStorage, Kind::Topology, t);
                if self.policy.bypass_enabled {
                    self.charge(stage, Link::GpuStorage, Kind::Activation, o);
                } else {
                    self.charge(stage, Link::GpuHost, Kind::Activation, o);
                    self.charge(stage, Link::HostStorage, Kind::Activation, o);
                }
                if warm && o > 0 && self.policy.cache_granularity != CacheGranularity::Vertex {
                    self.charge(stage, Link::GpuHost, Kind::Activation, o);
                    let deps: Vec<u32> = self.plan.dependencies[p].iter().map(|d| d.0).collect();
                    self.cache
                        .lookup_and_admit((l + 1, p as u32), o, &|k: CacheKey| k.0 == l && deps.contains(&k.1));
                    self.sync_host();
                }
                self.store_alloc(o)?;
                self.gpu_step(g + o + t)?;
                self.ledger.add_flops(stage, self.flops(l, p, false));
                let access = Access {
                    resident: self.resident_for(p),
                    source: BackwardSource::Regather,
                };
                exec.forward(epoch, l, p, &access)?;
            }
        }

        let top = self.layer_bytes(layers);
        let loss_stage = Stage {
            epoch,
            phase: Phase::Loss,
            layer: layers,
            partition: None,
        };
        if self.grads_resident {
            self.charge(loss_stage, Link::GpuHost, Kind::Gradient, top);
            self.host_held += top;
            self.sync_host();
        } else {
            self.charge(loss_stage, Link::GpuStorage, Kind::Gradient, top);
            self.store_alloc(top)?;
        }
        exec.loss(epoch)?;

        for l in (0..layers).rev() {
            let acc = if l >= 1 { self.layer_bytes(l) } else { 0 };
            let out_layer = self.layer_bytes(l + 1);
            let held_grad = if self.grads_resident { out_layer } else { 0 };
            if self.config.host_capacity < acc + held_grad {
                return Err(Error::Capacity {
                    tier: "host",
                    required: acc + held_grad,
                    capacity: self.config.host_capacity,
                });
            }
            self.host_held += acc;
            let capacity = self.config.host_capacity - acc - held_grad;
            let order = self.begin_cached_layer(epoch, Phase::Backward, l, capacity);
            for &p in &order {
                let p = p as usize;
                let stage = Stage {
                    epoch,
                    phase: Phase::Backward,
                    layer: l + 1,
                    partition: Some(p as u32),
                };
                self.load_dependencies(stage, l, p);
                let g = self.gather_bytes(l, p);
                let o = self.rows(p) * self.row(l + 1);
                let t = self.plan.topologies[p].storage_bytes();
                let out_key = (l + 1, p as u32);
                if warm && self.cache.contains(out_key) {
                    self.cache.touch(out_key);
                } else {
                    self.charge(stage, Link::HostStorage, Kind::Activation, o);
                }
                self.charge(stage, Link::GpuHost, Kind::Activation, o);
                if !self.grads_resident {
                    self.charge(stage, Link::HostStorage, Kind::Gradient, o);
                }
                self.charge(stage, Link::GpuHost, Kind::Gradient, o);
                self.charge(stage, Link::GpuStorage, Kind::Topology, t);
                self.charge(stage, Link::GpuHost, Kind::Activation, g);
                let dga = if l >= 1 { g } else { 0 };
                self.charge(stage, Link::GpuHost, Kind::Gradient, dga);
                self.gpu_step(g + 2 * o + t + dga)?;
                self.ledger.add_flops(stage, self.flops(l, p, true));
                let access = Access {
                    resident: self.resident_for(p),
                    source: BackwardSource::Regather,
                };
                exec.backward(epoch, l, p, &access)?;
            }

            // ∇A^{l+1} and A^{l+1} are dead.
            self.ledger.free(Tier::Storage, out_layer);
            if self.grads_resident {
                self.host_held -= out_layer;
            } else {
                self.ledger.free(Tier::Storage, out_layer);
            }
            if acc > 0 && !self.grads_resident {
                let stage = Stage {
                    epoch,
                    phase: Phase::Backward,
                    layer: l + 1,
                    partition: None,
                };
                self.charge(stage, Link::HostStorage, Kind::Gradient, acc);
                self.host_held -= acc;
                self.store_alloc(acc)?;
            }
            self.sync_host();
            exec.end_backward_layer(epoch, l)?;
        }
        debug_assert_eq!(self.host_held, 0);
        Ok(())
    }

    fn swap_epoch(&mut self, epoch: usize, exec: &mut dyn Executor) -> Result<()> {
        let layers = self.shape.num_layers();
        let np = self.plan.num_partitions();
        let intermediate = self.policy.kind == PolicyKind::HongtuIntermediate;
        let (kind, source) = if intermediate {
            (Kind::Intermediate, BackwardSource::IntermediateSnapshot)
        } else {
            (Kind::Snapshot, BackwardSource::GatherSnapshot)
        };
        let everything = vec![true; np];
        // Bytes kept for backward, per layer.
        let mut kept = vec![0u64; layers];

        for l in 0..layers {
            self.open_window();
            for p in 0..np {
                let stage = Stage {
                    epoch,
                    phase: Phase::Forward,
                    layer: l + 1,
                    partition: Some(p as u32),
                };
                let g = self.gather_bytes(l, p);
                let o = self.rows(p) * self.row(l + 1);
                let t = self.plan.topologies[p].storage_bytes();
                let snap = if intermediate { self.rows(p) * self.row(l) } else { g };
                self.charge_swapped(stage, Kind::Activation, g);
                self.charge_swapped(stage, kind, snap);
                self.charge_swapped(stage, Kind::Activation, o);
                self.charge(stage, Link::GpuHost, Kind::Topology, t);
                kept[l] += snap;
                self.demand += snap + o;
                self.sync_demand();
                self.gpu_step(g + snap + o + t)?;
                self.ledger.add_flops(stage, self.flops(l, p, false));
                exec.forward(
                    epoch,
                    l,
                    p,
                    &Access {
                        resident: everything.clone(),
                        source,
                    },
                )?;
            }
        }

        let top = self.layer_bytes(layers);
        self.open_window();
        let loss_stage = Stage {
            epoch,
            phase: Phase::Loss,
            layer: layers,
            partition: None,
        };
        self.charge_swapped(loss_stage, Kind::Gradient, top);
        self.demand += top;
        self.sync_demand();
        exec.loss(epoch)?;

        for l in (0..layers).rev() {
            self.open_window();
            let acc = if l >= 1 { self.layer_bytes(l) } else { 0 };
            self.demand += acc;
            self.sync_demand();
            for p in 0..np {
                let stage = Stage {
                    epoch,
                    phase: Phase::Backward,
                    layer: l + 1,
                    partition: Some(p as u32),
                };
                let g = self.gather_bytes(l, p);
                let o = self.rows(p) * self.row(l + 1);
                let t = self.plan.topologies[p].storage_bytes();
                let snap = if intermediate { self.rows(p) * self.row(l) } else { g };
                self.charge_swapped(stage, kind, snap);
                self.charge_swapped(stage, Kind::Activation, o);
                self.charge_swapped(stage, Kind::Gradient, o);
                let dga = if l >= 1 { g } else { 0 };
                self.charge_swapped(stage, Kind::Gradient, dga);
                self.charge(stage, Link::GpuHost, Kind::Topology, t);
                self.gpu_step(snap + g + 2 * o + t + dga)?;
                self.ledger.add_flops(stage, self.flops(l, p, true));
                exec.backward(
                    epoch,
                    l,
                    p,
                    &Access {
                        resident: everything.clone(),
                        source,
                    },
                )?;
            }
            self.demand -= kept[l] + 2 * self.layer_bytes(l + 1);
            self.sync_demand();
            exec.end_backward_layer(epoch, l)?;
        }
        Ok(())
    }

    fn naive_epoch(&mut self, epoch: usize, exec: &mut dyn Executor) -> Result<()> {
        let layers = self.shape.num_layers();
        let np = self.plan.num_partitions();
        let everything = vec![true; np];
        let mut kept = vec![0u64; layers];
        let direct = Link::GpuStorage;

        for l in 0..layers {
            let row = self.row(l);
            for p in 0..np {
                let stage = Stage {
                    epoch,
                    phase: Phase::Forward,
                    layer: l + 1,
                    partition: Some(p as u32),
                };
                let g = self.gather_bytes(l, p);
                let i0 = self.rows(p) * row;
                let o = self.rows(p) * self.row(l + 1);
                let t = self.plan.topologies[p].storage_bytes();
                let mut ids = self.plan.gather_maps[p].clone();
                ids.sort_unstable();
                let charged = page_charge(&ids, row, self.config.page_size);
                self.charge_paged(stage, direct, Kind::Activation, g, charged);
                self.charge(stage, direct, Kind::Snapshot, g);
                self.charge(stage, direct, Kind::Intermediate, i0);
                self.charge(stage, direct, Kind::Intermediate, o);
                self.charge(stage, direct, Kind::Activation, o);
                self.charge(stage, direct, Kind::Topology, t);
                let stored = g + i0 + 2 * o;
                kept[l] += g + i0 + o;
                self.store_alloc(stored)?;
                self.gpu_step(g + i0 + o + t)?;
                self.ledger.add_flops(stage, self.flops(l, p, false));
                exec.forward(
                    epoch,
                    l,
                    p,
                    &Access {
                        resident: everything.clone(),
                        source: BackwardSource::GatherSnapshot,
                    },
                )?;
            }
        }

        let top = self.layer_bytes(layers);
        let loss_stage = Stage {
            epoch,
            phase: Phase::Loss,
            layer: layers,
            partition: None,
        };
        self.charge(loss_stage, direct, Kind::Gradient, top);
        self.store_alloc(top)?;
        exec.loss(epoch)?;

        for l in (0..layers).rev() {
            let acc = if l >= 1 { self.layer_bytes(l) } else { 0 };
            self.store_alloc(acc)?;
            for p in 0..np {
                let stage = Stage {
                    epoch,
                    phase: Phase::Backward,
                    layer: l + 1,
                    partition: Some(p as u32),
                };
                let g = self.gather_bytes(l, p);
                let i0 = self.rows(p) * self.row(l);
                let o = self.rows(p) * self.row(l + 1);
                let t = self.plan.topologies[p].storage_bytes();
                self.charge(stage, direct, Kind::Snapshot, g);
                self.charge(stage, direct, Kind::Intermediate, i0);
                self.charge(stage, direct, Kind::Intermediate, o);
                self.charge(stage, direct, Kind::Gradient, o);
                let dga = if l >= 1 { g } else { 0 };
                self.charge(stage, direct, Kind::Gradient, dga);
                self.charge(stage, direct, Kind::Topology, t);
                self.gpu_step(g + i0 + 2 * o + t + dga)?;
                self.ledger.add_flops(stage, self.flops(l, p, true));
                exec.backward(
                    epoch,
                    l,
                    p,
                    &Access {
                        resident: everything.clone(),
                        source: BackwardSource::GatherSnapshot,
                    },
                )?;
            }
            // Snapshot, I0, Z and A^{l+1}, then ∇A^{l+1}.
            self.ledger.free(Tier::Storage, kept[l] + 2 * self.layer_bytes(l + 1));
            exec.end_backward_layer(epoch, l)?;
        }
        Ok(())
    }
}

/// Replays `epochs` epochs with no math attached.
pub fn simulate_epochs(
    plan: &PartitionPlan,
    shape: &ModelShape,
    policy: &PolicySpec,
    config: &HierarchyConfig,
    epochs: usize,
) -> Result<IoLedger> {
    let mut sim = Simulator::new(plan, shape.clone(), policy.clone(), config.clone())?;
    for e in 1..=epochs {
        sim.run_epoch(e, &mut NoopExecutor)?;
    }
    Ok(sim.finish())
}

/// One epoch of the schedule, ledger only.
pub fn simulate_epoch(plan: &PartitionPlan, shape: &ModelShape, policy: &PolicySpec, config: &HierarchyConfig) -> Result<IoLedger> {
    simulate_epochs(plan, shape, policy, config, 1)
}
