//! Synthetic labeled workloads, AUC evaluation, memory sweeps and event
//! aggregation.
//!
//! Regular traffic is a community skeleton: every ordered in-group node
//! pair fires with exponential inter-arrival times at a common base rate.
//! Injected anomalies are either simultaneous bursts between two random
//! nodes or fully connected cliques over a random node subset, labeled 1
//! per injected record.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::detector::ScoreRecord;
use crate::engine::{Engine, HyperParams, RunSummary};
use crate::stream::{canonicalize_type, Coalescer, Edge, Interner};
use crate::{Error, Result};

/// Anomaly flavor to inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InjectionKind {
    /// All directed edges among a random node subset at one tick.
    Clique,
    /// Many simultaneous edges between two random nodes at one tick.
    Burst,
}

/// Knobs for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_groups: usize,
    pub nodes_per_group: usize,
    /// Events per tick for each ordered in-group pair.
    pub base_freq: f64,
    /// Last tick of the stream.
    pub horizon: u64,
    pub n_injections: usize,
    pub injection_kind: InjectionKind,
    /// Nodes per injected clique.
    pub clique_size: usize,
    /// Simultaneous edges per injected burst.
    pub burst_size: u64,
    /// Injections land strictly after this tick (keeps them inside the
    /// scored region when the first tenth of the horizon is setup time).
    pub inject_after: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_groups: 2,
            nodes_per_group: 10,
            base_freq: 0.05,
            horizon: 5000,
            n_injections: 20,
            injection_kind: InjectionKind::Burst,
            clique_size: 8,
            burst_size: 70,
            inject_after: 500,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let total_nodes = self.n_groups * self.nodes_per_group;
        if self.n_groups == 0 || self.nodes_per_group == 0 {
            return Err(Error::InvalidConfig(
                "need at least one group and node".into(),
            ));
        }
        if self.nodes_per_group < 2 {
            return Err(Error::InvalidConfig(
                "groups need at least two nodes".into(),
            ));
        }
        if self.base_freq.is_nan() || self.base_freq <= 0.0 {
            return Err(Error::InvalidConfig("base_freq must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.n_injections > 0 && self.inject_after >= self.horizon {
            return Err(Error::InvalidConfig(
                "inject_after must be before the horizon".into(),
            ));
        }
        match self.injection_kind {
            InjectionKind::Clique => {
                if self.clique_size < 2 || self.clique_size > total_nodes {
                    return Err(Error::InvalidConfig(format!(
                        "clique_size must be in [2, {total_nodes}], got {}",
                        self.clique_size
                    )));
                }
            }
            InjectionKind::Burst => {
                if self.burst_size == 0 {
                    return Err(Error::InvalidConfig("burst_size must be >= 1".into()));
                }
                if total_nodes < 2 {
                    return Err(Error::InvalidConfig(
                        "bursts need at least two nodes".into(),
                    ));
                }
            }
        }
        if self.n_injections as u64 > self.horizon.saturating_sub(self.inject_after) {
            return Err(Error::InvalidConfig(
                "more injections than available ticks after inject_after".into(),
            ));
        }
        Ok(())
    }
}

/// A generated edge stream with one 0/1 label per edge record; the copies
/// of a weighted record inherit its label.
#[derive(Debug, Clone)]
pub struct LabeledStream {
    pub edges: Vec<Edge>,
    pub labels: Vec<u8>,
    pub interner: Interner,
}

impl LabeledStream {
    /// One label per interaction copy, expanding weighted records.
    pub fn expanded_labels(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (edge, &label) in self.edges.iter().zip(&self.labels) {
            out.extend(std::iter::repeat_n(label, edge.weight as usize));
        }
        out
    }

    /// Writes the stream in the standard input format plus its labels file.
    pub fn write_to<W1: Write, W2: Write>(&self, mut stream: W1, mut labels: W2) -> Result<()> {
        for (edge, label) in self.edges.iter().zip(&self.labels) {
            writeln!(
                stream,
                "{},{},{},{}",
                self.interner.name(edge.src),
                self.interner.name(edge.dst),
                edge.time,
                edge.weight
            )?;
            writeln!(labels, "{label}")?;
        }
        Ok(())
    }
}

/// Generates a community-skeleton stream with injected anomalies.
/// Deterministic under the config seed.
pub fn generate(config: &SyntheticConfig) -> Result<LabeledStream> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut interner = Interner::new();
    let nodes: Vec<Vec<_>> = (0..config.n_groups)
        .map(|g| {
            (0..config.nodes_per_group)
                .map(|i| interner.intern(&format!("g{g}n{i}")))
                .collect()
        })
        .collect();
    let all_nodes: Vec<_> = nodes.iter().flatten().copied().collect();

    // (time, src, dst, weight, label); indices assigned after ordering.
    let mut records = Vec::new();
    let arrivals = Exp::new(config.base_freq).expect("positive rate");
    for group in &nodes {
        for &src in group {
            for &dst in group {
                if src == dst {
                    continue;
                }
                let mut t = 0.0f64;
                loop {
                    t += arrivals.sample(&mut rng);
                    let tick = t.ceil() as u64;
                    if tick > config.horizon {
                        break;
                    }
                    records.push((tick.max(1), src, dst, 1u64, 0u8));
                }
            }
        }
    }

    let span = config.horizon.saturating_sub(config.inject_after) as usize;
    let chosen = rand::seq::index::sample(&mut rng, span, config.n_injections);
    for offset in chosen {
        let tick = config.inject_after + offset as u64 + 1;
        match config.injection_kind {
            InjectionKind::Burst => {
                let s = all_nodes[rng.random_range(0..all_nodes.len())];
                let mut d = all_nodes[rng.random_range(0..all_nodes.len())];
                while d == s {
                    d = all_nodes[rng.random_range(0..all_nodes.len())];
                }
                records.push((tick, s, d, config.burst_size, 1));
            }
            InjectionKind::Clique => {
                let picked =
                    rand::seq::index::sample(&mut rng, all_nodes.len(), config.clique_size);
                let members: Vec<_> = picked.iter().map(|i| all_nodes[i]).collect();
                for &s in &members {
                    for &d in &members {
                        if s != d {
                            records.push((tick, s, d, 1, 1));
                        }
                    }
                }
            }
        }
    }

    records.sort_by_key(|r| r.0);
    // Permute records sharing a timestamp; within-tick order carries no
    // meaning and downstream consumers must not rely on it.
    let mut start = 0;
    while start < records.len() {
        let t = records[start].0;
        let mut end = start;
        while end < records.len() && records[end].0 == t {
            end += 1;
        }
        records[start..end].shuffle(&mut rng);
        start = end;
    }

    let mut edges = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (index, (time, src, dst, weight, label)) in records.into_iter().enumerate() {
        edges.push(Edge {
            src,
            dst,
            time,
            weight,
            index: index as u64,
        });
        labels.push(label);
    }
    Ok(LabeledStream {
        edges,
        labels,
        interner,
    })
}

/// Mann-Whitney AUC with 0.5 credit for ties; infinite scores rank above
/// every finite score. Requires both classes present.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::OneClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            j += 1;
        }
        // Average rank over the tie run [i, j); ranks are 1-based.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Runs the engine over a labeled stream and returns the emitted score
/// records plus the run summary. Types are canonicalized first when the
/// parameters request undirected handling.
pub fn score_stream(
    stream: &LabeledStream,
    params: &HyperParams,
) -> Result<(Vec<ScoreRecord>, RunSummary)> {
    let mut edges = stream.edges.clone();
    if params.undirected {
        for edge in &mut edges {
            let ty = canonicalize_type(edge.ty(), true, &stream.interner);
            edge.src = ty.src;
            edge.dst = ty.dst;
        }
    }
    let mut engine = Engine::new(params.clone())?;
    let mut records = Vec::new();
    let ticks = Coalescer::new(edges.iter().copied().map(Ok));
    let summary = engine.run(ticks, |r| records.push(r.clone()))?;
    Ok((records, summary))
}

/// AUC of the scored copies of a labeled stream under the given parameters.
pub fn evaluate_stream(stream: &LabeledStream, params: &HyperParams) -> Result<(f64, RunSummary)> {
    let (records, summary) = score_stream(stream, params)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = records
        .iter()
        .map(|r| stream.labels[r.event_index as usize])
        .collect();
    Ok((auc(&scores, &labels)?, summary))
}

/// One memory-sweep result row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mem_limit: Option<usize>,
    pub auc: f64,
    pub final_f_th: f64,
}

/// Reruns the engine per memory limit, reporting AUC and the convergent
/// cut-off frequency.
pub fn sweep_memory(
    stream: &LabeledStream,
    params: &HyperParams,
    limits: &[Option<usize>],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(limits.len());
    for &mem_limit in limits {
        let p = HyperParams {
            mem_limit,
            ..params.clone()
        };
        let (auc, summary) = evaluate_stream(stream, &p)?;
        rows.push(SweepRow {
            mem_limit,
            auc,
            final_f_th: summary.final_f_th,
        });
    }
    Ok(rows)
}

/// Max score per period bucket (bucket index = time / period); empty
/// buckets are omitted. Output is sorted by bucket index.
pub fn aggregate_events(
    records: impl IntoIterator<Item = (u64, f64)>,
    period: u64,
) -> Vec<(u64, f64)> {
    assert!(period > 0, "period must be positive");
    let mut buckets: Vec<(u64, f64)> = Vec::new();
    for (time, score) in records {
        let bucket = time / period;
        match buckets.iter_mut().find(|(b, _)| *b == bucket) {
            Some((_, max)) => {
                if score > *max {
                    *max = score;
                }
            }
            None => buckets.push((bucket, score)),
        }
    }
    buckets.sort_by_key(|&(b, _)| b);
    buckets
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn burst_config() -> SyntheticConfig {
        SyntheticConfig {
            horizon: 600,
            inject_after: 100,
            n_injections: 5,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn no_injections_means_all_regular_labels() {
        let cfg = SyntheticConfig {
            n_injections: 0,
            horizon: 200,
            ..SyntheticConfig::default()
        };
        let stream = generate(&cfg).unwrap();
        assert!(!stream.edges.is_empty());
        assert!(stream.labels.iter().all(|&l| l == 0));
        assert_eq!(stream.edges.len(), stream.labels.len());
    }

    #[test]
    fn burst_injection_is_one_weighted_record() {
        let stream = generate(&burst_config()).unwrap();
        let bursts: Vec<&Edge> = stream
            .edges
            .iter()
            .zip(&stream.labels)
            .filter(|(_, &l)| l == 1)
            .map(|(e, _)| e)
            .collect();
        assert_eq!(bursts.len(), 5);
        assert!(bursts.iter().all(|e| e.weight == 70));
        let times: std::collections::BTreeSet<u64> = bursts.iter().map(|e| e.time).collect();
        assert_eq!(times.len(), 5, "each burst lands on its own tick");
        assert!(times.iter().all(|&t| t > 100));
    }

    #[test]
    fn clique_injection_emits_all_ordered_pairs() {
        let cfg = SyntheticConfig {
            injection_kind: InjectionKind::Clique,
            n_injections: 3,
            horizon: 600,
            inject_after: 100,
            ..SyntheticConfig::default()
        };
        let stream = generate(&cfg).unwrap();
        let labeled: Vec<&Edge> = stream
            .edges
            .iter()
            .zip(&stream.labels)
            .filter(|(_, &l)| l == 1)
            .map(|(e, _)| e)
            .collect();
        assert_eq!(labeled.len(), 3 * 8 * 7);
        assert!(labeled.iter().all(|e| e.weight == 1));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate(&burst_config()).unwrap();
        let b = generate(&burst_config()).unwrap();
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.labels, b.labels);
        let c = generate(&SyntheticConfig {
            seed: 8,
            ..burst_config()
        })
        .unwrap();
        assert_ne!(a.edges, c.edges);
    }

    #[test]
    fn expanded_labels_cover_every_copy() {
        let stream = generate(&burst_config()).unwrap();
        let total: u64 = stream.edges.iter().map(|e| e.weight).sum();
        let expanded = stream.expanded_labels();
        assert_eq!(expanded.len() as u64, total);
        assert_eq!(expanded.iter().filter(|&&l| l == 1).count(), 5 * 70);
    }

    #[test]
    fn generator_rejects_oversized_clique() {
        let cfg = SyntheticConfig {
            injection_kind: InjectionKind::Clique,
            clique_size: 100,
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn auc_perfect_separation() {
        let scores = [0.1, 0.2, 5.0, 9.0];
        let labels = [0, 0, 1, 1];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn auc_identical_scores_is_half() {
        let scores = [1.0; 6];
        let labels = [0, 1, 0, 1, 0, 1];
        assert_eq!(auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn auc_counts_pairwise_wins() {
        // Positive (0.9) beats both negatives: 2/2.
        assert_eq!(auc(&[0.1, 0.9, 0.5], &[0, 1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn auc_ranks_infinities_on_top() {
        assert_eq!(auc(&[f64::INFINITY, 1.0], &[1, 0]).unwrap(), 1.0);
        // Two infinities tie across classes: 0.5 credit.
        assert_eq!(auc(&[f64::INFINITY, f64::INFINITY], &[1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn auc_rejects_one_class_input() {
        assert!(matches!(
            auc(&[1.0, 2.0], &[1, 1]),
            Err(Error::OneClass { .. })
        ));
        assert!(matches!(auc(&[1.0], &[0]), Err(Error::OneClass { .. })));
        assert!(matches!(
            auc(&[1.0], &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &sp) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sn) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn sweep_reports_one_row_per_limit() {
        let stream = generate(&SyntheticConfig {
            horizon: 300,
            inject_after: 50,
            n_injections: 4,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let params = HyperParams {
            t_setup: 30,
            w_upd: 50,
            alpha: 0.9,
            dim: 4,
            f_th_init: 0.005,
            seed: 3,
            ..HyperParams::default()
        };
        let rows = sweep_memory(&stream, &params, &[Some(50)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mem_limit, Some(50));

        // Unbounded memory leaves the cut-off at its initial value.
        let rows = sweep_memory(&stream, &params, &[None]).unwrap();
        assert_eq!(rows[0].final_f_th, 0.005);
    }

    #[test]
    fn undirected_mode_ignores_edge_orientation() {
        // Flipping edge directions must not change anything once types are
        // canonicalized (and the identity mix makes intensities symmetric).
        let mut interner = Interner::new();
        let a = interner.intern("a");
        let b = interner.intern("b");
        let c = interner.intern("c");
        let mut forward = Vec::new();
        for t in 1..200u64 {
            let (s, d) = [(a, b), (b, c), (a, c)][(t % 3) as usize];
            forward.push(Edge {
                src: s,
                dst: d,
                time: t,
                weight: 1 + t % 2,
                index: t - 1,
            });
        }
        let mut flipped = forward.clone();
        for e in flipped.iter_mut().step_by(2) {
            std::mem::swap(&mut e.src, &mut e.dst);
        }
        let labels = vec![0u8; forward.len()];
        let params = HyperParams {
            t_setup: 40,
            w_upd: 50,
            alpha: 0.9,
            dim: 4,
            f_th_init: 0.01,
            undirected: true,
            seed: 5,
            ..HyperParams::default()
        };
        let run = |edges: Vec<Edge>, interner: Interner| {
            let stream = LabeledStream {
                edges,
                labels: labels.clone(),
                interner,
            };
            let (records, _) = score_stream(&stream, &params).unwrap();
            records
        };
        let lhs = run(forward, interner.clone());
        let rhs = run(flipped, interner);
        assert_eq!(lhs, rhs);
        assert!(!lhs.is_empty());
    }

    #[test]
    fn aggregate_buckets_by_max() {
        assert_eq!(aggregate_events([(5, 1.5)], 10), vec![(0, 1.5)]);
        assert_eq!(aggregate_events([(5, 1.5), (7, 9.0)], 10), vec![(0, 9.0)]);
        let got = aggregate_events([(5, 1.0), (25, 3.0), (27, 2.0)], 10);
        assert_eq!(got, vec![(0, 1.0), (2, 3.0)]);
    }

    #[test]
    fn weekly_aggregation_matches_brute_force() {
        let period = 10_080u64;
        let records: Vec<(u64, f64)> = (0..50)
            .map(|i| (1 + i * 4321 % 50_000, (i as f64 * 7.31) % 11.0))
            .collect();
        let got = aggregate_events(records.iter().copied(), period);
        let mut want: std::collections::BTreeMap<u64, f64> = Default::default();
        for &(t, s) in &records {
            let e = want.entry(t / period).or_insert(f64::NEG_INFINITY);
            *e = e.max(s);
        }
        assert_eq!(got, want.into_iter().collect::<Vec<_>>());
    }

    proptest! {
        /// Rank-based AUC equals the brute-force pairwise count exactly on
        /// small instances.
        #[test]
        fn auc_matches_brute_force(
            data in proptest::collection::vec((0u8..2, 0u32..40), 2..200)
        ) {
            let labels: Vec<u8> = data.iter().map(|&(l, _)| l).collect();
            let scores: Vec<f64> = data.iter().map(|&(_, s)| s as f64 / 4.0).collect();
            let positives = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(positives > 0 && positives < labels.len());
            prop_assert_eq!(auc(&scores, &labels).unwrap(), brute_force_auc(&scores, &labels));
        }

        /// Aggregation is independent of record order within a period.
        #[test]
        fn aggregation_order_independent(
            mut records in proptest::collection::vec((1u64..200, 0u32..100), 1..60),
            seed in 0u64..1000
        ) {
            let base: Vec<(u64, f64)> = records.iter().map(|&(t, s)| (t, s as f64)).collect();
            let sorted = aggregate_events(base.iter().copied(), 25);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            records.shuffle(&mut rng);
            let shuffled: Vec<(u64, f64)> = records.iter().map(|&(t, s)| (t, s as f64)).collect();
            prop_assert_eq!(sorted, aggregate_events(shuffled, 25));
        }
    }
}
