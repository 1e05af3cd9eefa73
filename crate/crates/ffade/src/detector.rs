//! Anomaly scoring of incoming interactions.
//!
//! The observed frequency of an interaction is the inverse of the gap since
//! the previous same-type event (the cut-off frequency when no previous
//! event is tracked). `w` simultaneous copies are placed evenly inside the
//! time slot: the first copy sees `1/(t - t' - 1 + 1/w)`, the remaining
//! `w - 1` copies see exactly `w`. The anomaly score of an observation is
//! `f_obs / lambda` — the negative log tail probability under the fitted
//! exponential model, so thresholding at `tau` yields a false positive rate
//! of `exp(-tau)` when the model fits.
//!
//! Beyond the pair channel, each copy is also scored against the group of
//! interactions sharing its source (and destination) within the same tick,
//! with the group intensity being the sum of member intensities.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::factorizer::{EmbeddingTable, MixMatrix};
use crate::skeleton::SkeletonMap;
use crate::stream::{InteractionType, NodeId, Tick};
use crate::{Error, Result};

/// Which score channel produced a record's winning value. Exact ties
/// resolve in this declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Pair,
    GroupOut,
    GroupIn,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Pair => write!(f, "pair"),
            Channel::GroupOut => write!(f, "group_out"),
            Channel::GroupIn => write!(f, "group_in"),
        }
    }
}

/// One scored interaction copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    /// Ordinal of the originating input record (labels align on this).
    pub event_index: u64,
    pub time: u64,
    pub ty: InteractionType,
    pub score: f64,
    pub channel: Channel,
    /// Which of the type's `w` simultaneous copies this is.
    pub sub_index: u64,
}

/// Last-seen times consulted by the group channels: the most recent
/// out-interaction per source node and in-interaction per destination node,
/// reflecting state strictly before the current tick. Pair-channel last
/// times come from the skeleton itself. Pruned alongside skeleton evictions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LastSeenIndex {
    #[serde(with = "indexmap::map::serde_seq")]
    per_source_out: IndexMap<NodeId, u64>,
    #[serde(with = "indexmap::map::serde_seq")]
    per_dest_in: IndexMap<NodeId, u64>,
}

impl LastSeenIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_out(&self, node: NodeId) -> Option<u64> {
        self.per_source_out.get(&node).copied()
    }

    pub fn last_in(&self, node: NodeId) -> Option<u64> {
        self.per_dest_in.get(&node).copied()
    }

    /// Folds a processed tick into the index.
    pub fn record_tick(&mut self, tick: &Tick) {
        for ty in tick.typed_counts.keys() {
            self.per_source_out.insert(ty.src, tick.time);
            self.per_dest_in.insert(ty.dst, tick.time);
        }
    }

    /// Drops a node that is no longer tracked by the skeleton.
    pub fn prune_node(&mut self, node: NodeId) {
        self.per_source_out.swap_remove(&node);
        self.per_dest_in.swap_remove(&node);
    }

    pub fn len(&self) -> usize {
        self.per_source_out.len() + self.per_dest_in.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_source_out.is_empty() && self.per_dest_in.is_empty()
    }
}

/// Per-copy observed frequencies for `w` simultaneous interactions at `t`
/// whose previous same-type event was at `t_prev` (if tracked).
pub fn observed_freqs(t: u64, t_prev: Option<u64>, w: u64, f_th: f64) -> Result<Vec<f64>> {
    if let Some(tp) = t_prev {
        if tp >= t {
            return Err(Error::InvalidConfig(format!(
                "previous time {tp} is not before current time {t}"
            )));
        }
    }
    debug_assert!(w >= 1);
    let mut out = Vec::with_capacity(w as usize);
    out.push(first_copy_freq(t, t_prev, w, f_th));
    for _ in 1..w {
        out.push(w as f64);
    }
    Ok(out)
}

/// Observed frequency of the first of `w` evenly placed copies:
/// `1/(t - t' - 1 + 1/w)`, or the cut-off when no previous time is known.
/// With `w = 1` this reduces to the plain inverse gap.
fn first_copy_freq(t: u64, t_prev: Option<u64>, w: u64, f_th: f64) -> f64 {
    match t_prev {
        Some(tp) => 1.0 / ((t - tp) as f64 - 1.0 + 1.0 / w as f64),
        None => f_th,
    }
}

/// `f_obs / lambda` with the conventions: a zero observation is maximally
/// regular (score 0), and a zero intensity makes any positive observation
/// maximally surprising (infinite score).
fn score_ratio(f_obs: f64, lambda: f64) -> f64 {
    if f_obs == 0.0 {
        0.0
    } else if lambda <= 0.0 {
        f64::INFINITY
    } else {
        f_obs / lambda
    }
}

/// Intensity of a pair with the fallback rule: `exp(h_s^T Q h_d)` when both
/// embeddings exist, the cut-off frequency otherwise.
pub fn pair_intensity_or_fallback(
    ty: &InteractionType,
    emb: &EmbeddingTable,
    q: &MixMatrix,
    f_th: f64,
) -> f64 {
    emb.pair_intensity(ty, q).unwrap_or(f_th)
}

/// Anomaly score of a single-type observation.
pub fn pair_score(
    f_obs: f64,
    ty: &InteractionType,
    emb: &EmbeddingTable,
    q: &MixMatrix,
    f_th: f64,
) -> f64 {
    score_ratio(f_obs, pair_intensity_or_fallback(ty, emb, q, f_th))
}

/// Anomaly score of an observation against a group of types; the group
/// intensity is the sum of member intensities (merging independent Poisson
/// processes sums their rates).
pub fn group_score(
    f_obs: f64,
    group: &[InteractionType],
    emb: &EmbeddingTable,
    q: &MixMatrix,
    f_th: f64,
) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let total: f64 = group
        .iter()
        .map(|ty| pair_intensity_or_fallback(ty, emb, q, f_th))
        .sum();
    Ok(score_ratio(f_obs, total))
}

/// Group context resolved per (node, direction): summed intensity, total
/// simultaneous weight, and the group's first member type in tick order.
struct GroupCtx {
    lambda_sum: f64,
    total_weight: u64,
    first_member: InteractionType,
    prev_time: Option<u64>,
}

impl GroupCtx {
    /// Group-channel observed frequency for one copy: the group's first
    /// copy overall carries the gap-based value of the even placement, all
    /// later copies carry the total weight.
    fn copy_freq(&self, t: u64, ty: &InteractionType, copy: u64, f_th: f64) -> f64 {
        if copy == 0 && self.first_member == *ty {
            first_copy_freq(t, self.prev_time, self.total_weight, f_th)
        } else {
            self.total_weight as f64
        }
    }
}

/// Scores every interaction copy in a tick against state strictly before
/// the tick (the skeleton, last-seen index and embeddings must not yet
/// include the tick itself).
///
/// Each copy takes the maximum over the pair channel, the group of
/// simultaneous types sharing its source, and the group sharing its
/// destination. Group channels reuse the even-placement rule with the
/// group's total simultaneous weight.
pub fn detect_tick(
    tick: &Tick,
    skel: &SkeletonMap,
    idx: &LastSeenIndex,
    emb: &EmbeddingTable,
    q: &MixMatrix,
    f_th: f64,
    with_groups: bool,
) -> Result<Vec<ScoreRecord>> {
    let t = tick.time;

    let mut out_groups: IndexMap<NodeId, (Vec<InteractionType>, u64)> = IndexMap::new();
    let mut in_groups: IndexMap<NodeId, (Vec<InteractionType>, u64)> = IndexMap::new();
    if with_groups {
        for (ty, count) in &tick.typed_counts {
            let g = out_groups.entry(ty.src).or_default();
            g.0.push(*ty);
            g.1 += count.weight;
            let g = in_groups.entry(ty.dst).or_default();
            g.0.push(*ty);
            g.1 += count.weight;
        }
    }
    let resolve = |groups: &IndexMap<NodeId, (Vec<InteractionType>, u64)>,
                   node: NodeId,
                   prev_time: Option<u64>|
     -> Option<GroupCtx> {
        let (members, total_weight) = groups.get(&node)?;
        Some(GroupCtx {
            lambda_sum: members
                .iter()
                .map(|m| pair_intensity_or_fallback(m, emb, q, f_th))
                .sum(),
            total_weight: *total_weight,
            first_member: members[0],
            prev_time,
        })
    };

    let mut records = Vec::new();
    for (ty, count) in &tick.typed_counts {
        let w = count.weight;
        let pair_prev = skel.lookup(ty).map(|e| e.last_time);
        let pair_freqs = observed_freqs(t, pair_prev, w, f_th)?;
        let pair_lambda = pair_intensity_or_fallback(ty, emb, q, f_th);
        let out_ctx = resolve(&out_groups, ty.src, idx.last_out(ty.src));
        let in_ctx = resolve(&in_groups, ty.dst, idx.last_in(ty.dst));

        let mut copy = 0u64;
        for &(event_index, slice_w) in &count.slices {
            for _ in 0..slice_w {
                let mut best = (
                    score_ratio(pair_freqs[copy as usize], pair_lambda),
                    Channel::Pair,
                );
                if let Some(ctx) = &out_ctx {
                    let s = score_ratio(ctx.copy_freq(t, ty, copy, f_th), ctx.lambda_sum);
                    if s > best.0 {
                        best = (s, Channel::GroupOut);
                    }
                }
                if let Some(ctx) = &in_ctx {
                    let s = score_ratio(ctx.copy_freq(t, ty, copy, f_th), ctx.lambda_sum);
                    if s > best.0 {
                        best = (s, Channel::GroupIn);
                    }
                }
                records.push(ScoreRecord {
                    event_index,
                    time: t,
                    ty: *ty,
                    score: best.0,
                    channel: best.1,
                    sub_index: copy,
                });
                copy += 1;
            }
        }
    }
    Ok(records)
}
