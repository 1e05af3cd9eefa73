//! The network skeleton: a bounded map from interaction type to its last
//! event time and exponentially decayed aggregated frequency.
//!
//! Every event folds into its type's entry through the recurrence
//! `f <- alpha^(t - t') * f' + (1 - alpha) * w`, which is equivalent to the
//! kernel sum `sum_i w_i * alpha^(T - t_i) * (1 - alpha)` over the full
//! event history. When the map exceeds its capacity `M`, the cut-off
//! frequency `f_th` rises to the smallest value that keeps at most `M`
//! entries, and everything decayed below the cut-off is evicted. The
//! cut-off never decreases.
//!
//! A lazily invalidated min-heap orders entries by decayed frequency. Heap
//! keys live in the log domain (`ln f - t * ln alpha`), which is invariant
//! under the query time and immune to `alpha^dt` underflow for long gaps.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::stream::{InteractionType, Interner, NodeId};
use crate::{Error, Result};

/// Last event time and aggregated frequency of one interaction type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqEntry {
    pub last_time: u64,
    pub freq: f64,
}

/// Evaluates the decayed frequency of an entry at `now >= last_time`.
pub fn decayed_freq(entry: &FreqEntry, now: u64, alpha: f64) -> f64 {
    debug_assert!(now >= entry.last_time);
    if alpha == 0.0 {
        return if now == entry.last_time {
            entry.freq
        } else {
            0.0
        };
    }
    entry.freq * alpha.powi((now - entry.last_time) as i32)
}

/// Types seen since the last model update. Pruned alongside skeleton
/// evictions so it always stays a subset of the skeleton's key set.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct ActiveSet {
    types: IndexSet<InteractionType>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ty: InteractionType) {
        self.types.insert(ty);
    }

    pub fn remove(&mut self, ty: &InteractionType) {
        self.types.shift_remove(ty);
    }

    pub fn clear(&mut self) {
        self.types.clear();
    }

    pub fn contains(&self, ty: &InteractionType) -> bool {
        self.types.contains(ty)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &InteractionType> {
        self.types.iter()
    }

    /// Endpoint set of the active types, in first-seen order.
    pub fn nodes(&self) -> IndexSet<NodeId> {
        let mut nodes = IndexSet::new();
        for ty in &self.types {
            nodes.insert(ty.src);
            nodes.insert(ty.dst);
        }
        nodes
    }
}

/// Heap ordering key. For `alpha > 0` the first component is
/// `ln f - t * ln alpha` and the second is unused; for `alpha == 0` the
/// pair `(t, ln f)` gives the same relative order of decayed values.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DecayKey(f64, f64);

impl DecayKey {
    fn new(entry: &FreqEntry, alpha: f64) -> Self {
        if alpha == 0.0 {
            DecayKey(entry.last_time as f64, entry.freq.ln())
        } else {
            DecayKey(entry.freq.ln() - entry.last_time as f64 * alpha.ln(), 0.0)
        }
    }

    fn cmp_total(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| self.1.total_cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
struct HeapItem {
    key: DecayKey,
    ty: InteractionType,
    stamp: u64,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that BinaryHeap (a max-heap) pops the minimum decayed
// frequency first; key ties break on canonical type order.
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp_total(&other.key)
            .then_with(|| self.ty.cmp(&other.ty))
            .reverse()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Slot {
    entry: FreqEntry,
    stamp: u64,
}

/// Result of folding one event into the skeleton.
#[derive(Debug, Default)]
pub struct UnionOutcome {
    pub evicted: Vec<InteractionType>,
}

/// The bounded interaction-temporal-frequency map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkeletonMap {
    #[serde(with = "indexmap::map::serde_seq")]
    entries: IndexMap<InteractionType, Slot>,
    alpha: f64,
    capacity: Option<usize>,
    cutoff: f64,
    // ln(cutoff) as computed in the log domain when the cut-off was raised.
    // Purge comparisons must use this, not ln(cutoff), so the entry that
    // defined the cut-off is never lost to cross-domain rounding.
    cutoff_ln: f64,
    evictions: u64,
    next_stamp: u64,
    #[serde(skip)]
    heap: BinaryHeap<HeapItem>,
    // Serialized: its iteration order feeds embedding initialization and
    // sampling, so a restored engine must reproduce it exactly.
    #[serde(with = "indexmap::map::serde_seq")]
    node_degree: IndexMap<NodeId, u32>,
}

impl SkeletonMap {
    /// `capacity = None` means unbounded (the cut-off then stays at its
    /// initial value unless entries decay below it).
    pub fn new(alpha: f64, capacity: Option<usize>, initial_cutoff: f64) -> Self {
        assert!((0.0..1.0).contains(&alpha), "alpha must be in [0, 1)");
        assert!(initial_cutoff >= 0.0);
        if let Some(m) = capacity {
            assert!(m > 0, "capacity must be positive");
        }
        Self {
            entries: IndexMap::new(),
            alpha,
            capacity,
            cutoff: initial_cutoff,
            cutoff_ln: initial_cutoff.ln(),
            evictions: 0,
            next_stamp: 0,
            heap: BinaryHeap::new(),
            node_degree: IndexMap::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Current cut-off frequency `f_th`.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total entries evicted so far.
    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn lookup(&self, ty: &InteractionType) -> Option<&FreqEntry> {
        self.entries.get(ty).map(|s| &s.entry)
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.node_degree.contains_key(&node)
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&InteractionType, &FreqEntry)> {
        self.entries.iter().map(|(ty, slot)| (ty, &slot.entry))
    }

    /// Nodes currently incident to at least one entry, in first-seen order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_degree.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.node_degree.len()
    }

    /// Folds one event into the map: decay-and-add for an existing type,
    /// `(1 - alpha) * w` for a new one, then capacity enforcement and the
    /// cut-off purge. The touched type is also recorded in the active set;
    /// evicted types are removed from it.
    pub fn union_edge(
        &mut self,
        active: &mut ActiveSet,
        ty: InteractionType,
        weight: u64,
        now: u64,
    ) -> UnionOutcome {
        active.insert(ty);
        let fresh = (1.0 - self.alpha) * weight as f64;
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        match self.entries.get_mut(&ty) {
            Some(slot) => {
                debug_assert!(now >= slot.entry.last_time);
                let decayed = decayed_freq(&slot.entry, now, self.alpha);
                slot.entry = FreqEntry {
                    last_time: now,
                    freq: decayed + fresh,
                };
                slot.stamp = stamp;
            }
            None => {
                self.entries.insert(
                    ty,
                    Slot {
                        entry: FreqEntry {
                            last_time: now,
                            freq: fresh,
                        },
                        stamp,
                    },
                );
                *self.node_degree.entry(ty.src).or_insert(0) += 1;
                if ty.dst != ty.src {
                    *self.node_degree.entry(ty.dst).or_insert(0) += 1;
                }
            }
        }
        let entry = self.entries[&ty].entry;
        self.heap.push(HeapItem {
            key: DecayKey::new(&entry, self.alpha),
            ty,
            stamp,
        });

        let mut outcome = UnionOutcome::default();
        if let Some(m) = self.capacity {
            if self.entries.len() > m {
                self.raise_cutoff(now, active, &mut outcome);
            }
        }
        self.purge_below_cutoff(now, active, &mut outcome);
        if let Some(m) = self.capacity {
            // Only reachable when more than M entries tie exactly at the
            // cut-off (or the boundary value underflowed): drop oldest first.
            while self.entries.len() > m {
                if let Some(item) = self.pop_valid_min() {
                    self.evict(item.ty, active, &mut outcome);
                } else {
                    break;
                }
            }
        }
        self.maybe_compact();
        outcome
    }

    /// Minimum-decayed-frequency entry at `now`; ties break on canonical
    /// type order.
    pub fn min_decayed(&mut self, now: u64) -> Result<(InteractionType, f64)> {
        self.drop_stale_tops();
        match self.heap.peek() {
            Some(item) => {
                let entry = self.entries[&item.ty].entry;
                Ok((item.ty, decayed_freq(&entry, now, self.alpha)))
            }
            None => Err(Error::EmptySkeleton),
        }
    }

    /// Raises `f_th` when the map holds more than `m` entries: the new value
    /// is the smallest currently present decayed frequency that keeps at
    /// most `m` entries at or above it. Candidates below the new cut-off are
    /// evicted immediately; the remainder is handled by the purge.
    fn raise_cutoff(&mut self, now: u64, active: &mut ActiveSet, outcome: &mut UnionOutcome) {
        // Pop the entire minimum tie group off the heap.
        let first = match self.pop_valid_min() {
            Some(item) => item,
            None => return,
        };
        let mut group = vec![first.clone()];
        loop {
            self.drop_stale_tops();
            match self.heap.peek() {
                Some(top) if top.key.cmp_total(&first.key) == Ordering::Equal => {
                    group.push(self.heap.pop().unwrap());
                }
                _ => break,
            }
        }
        self.drop_stale_tops();
        match self.heap.peek() {
            Some(next) => {
                // Second-smallest distinct decayed value is the smallest
                // feasible cut-off; the popped group sits strictly below it.
                let boundary = self.entries[&next.ty].entry;
                self.raise_to(&boundary, now);
                for item in group {
                    self.evict(item.ty, active, outcome);
                }
            }
            None => {
                // Every entry ties at one decayed value: the cut-off becomes
                // that value and the oldest entries are dropped, oldest
                // last_time first.
                let boundary = self.entries[&first.ty].entry;
                self.raise_to(&boundary, now);
                let mut group = group;
                group.sort_by(|a, b| {
                    let ta = self.entries[&a.ty].entry.last_time;
                    let tb = self.entries[&b.ty].entry.last_time;
                    ta.cmp(&tb).then_with(|| a.ty.cmp(&b.ty))
                });
                let m = self.capacity.unwrap_or(usize::MAX);
                let excess = self.entries.len().saturating_sub(m);
                for item in group.iter().take(excess) {
                    self.evict(item.ty, active, outcome);
                }
                for item in group.iter().skip(excess) {
                    self.heap.push(item.clone());
                }
            }
        }
    }

    /// Raises the cut-off to the decayed frequency of `boundary` at `now`,
    /// recording both the value and its log-domain form.
    fn raise_to(&mut self, boundary: &FreqEntry, now: u64) {
        let value = decayed_freq(boundary, now, self.alpha);
        if value > self.cutoff {
            self.cutoff = value;
            self.cutoff_ln = if self.alpha == 0.0 {
                value.ln()
            } else {
                boundary.freq.ln() + (now - boundary.last_time) as f64 * self.alpha.ln()
            };
        }
    }

    /// Removes every entry whose decayed frequency at `now` is strictly
    /// below the cut-off.
    fn purge_below_cutoff(&mut self, now: u64, active: &mut ActiveSet, outcome: &mut UnionOutcome) {
        if self.cutoff <= 0.0 {
            return;
        }
        loop {
            self.drop_stale_tops();
            let ty = match self.heap.peek() {
                Some(item) => {
                    let entry = &self.entries[&item.ty].entry;
                    if !self.decayed_below_cutoff(entry, now) {
                        break;
                    }
                    item.ty
                }
                None => break,
            };
            self.heap.pop();
            self.evict(ty, active, outcome);
        }
    }

    /// Strict comparison `decayed(entry, now) < f_th` in the log domain.
    fn decayed_below_cutoff(&self, entry: &FreqEntry, now: u64) -> bool {
        if self.cutoff <= 0.0 {
            return false;
        }
        if self.alpha == 0.0 {
            return decayed_freq(entry, now, 0.0) < self.cutoff;
        }
        let log_decayed = entry.freq.ln() + (now - entry.last_time) as f64 * self.alpha.ln();
        log_decayed < self.cutoff_ln
    }

    fn evict(&mut self, ty: InteractionType, active: &mut ActiveSet, outcome: &mut UnionOutcome) {
        if self.entries.swap_remove(&ty).is_some() {
            self.evictions += 1;
            active.remove(&ty);
            self.decrement_degree(ty.src);
            if ty.dst != ty.src {
                self.decrement_degree(ty.dst);
            }
            outcome.evicted.push(ty);
        }
    }

    fn decrement_degree(&mut self, node: NodeId) {
        if let Some(d) = self.node_degree.get_mut(&node) {
            *d -= 1;
            if *d == 0 {
                self.node_degree.swap_remove(&node);
            }
        }
    }

    fn drop_stale_tops(&mut self) {
        while let Some(top) = self.heap.peek() {
            match self.entries.get(&top.ty) {
                Some(slot) if slot.stamp == top.stamp => return,
                _ => {
                    self.heap.pop();
                }
            }
        }
    }

    fn pop_valid_min(&mut self) -> Option<HeapItem> {
        self.drop_stale_tops();
        self.heap.pop()
    }

    fn maybe_compact(&mut self) {
        if self.heap.len() > 2 * self.entries.len() + 64 {
            self.rebuild_heap();
        }
    }

    /// Rebuilds the heap from the entry map. Needed after deserialization,
    /// where the heap is skipped; also drops accumulated stale items.
    pub fn rebuild_heap(&mut self) {
        self.heap = self
            .entries
            .iter()
            .map(|(ty, slot)| HeapItem {
                key: DecayKey::new(&slot.entry, self.alpha),
                ty: *ty,
                stamp: slot.stamp,
            })
            .collect();
    }

    /// Debug/checkpoint dump: one `src,dst,last_time,freq` line per entry.
    pub fn write_snapshot<W: Write>(&self, mut out: W, interner: &Interner) -> Result<()> {
        for (ty, entry) in self.iter() {
            writeln!(
                out,
                "{},{},{},{:.15e}",
                interner.name(ty.src),
                interner.name(ty.dst),
                entry.last_time,
                entry.freq
            )?;
        }
        Ok(())
    }
}
