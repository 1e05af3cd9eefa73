//! The full streaming pipeline over coalesced ticks.
//!
//! Per tick, in order: score the tick against pre-tick state (only after
//! the setup period), fold every typed count into the skeleton, refresh the
//! last-seen index, and — whenever the time reaches `t_setup + k * W_upd` —
//! refit embeddings (globally at setup, locally afterwards) and clear the
//! active set. If ticks skip past several update deadlines, one update
//! fires and the counter jumps forward; there is no catch-up burst.

use indexmap::IndexSet;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{detect_tick, LastSeenIndex, ScoreRecord};
use crate::factorizer::{ffac_update, EmbeddingTable, FitMode, MixMatrix, OptimizerConfig};
use crate::skeleton::{ActiveSet, SkeletonMap};
use crate::stream::{NodeId, Tick};
use crate::{Error, Result};

const SNAPSHOT_VERSION: u32 = 1;

/// Run-level settings. Defaults follow the documented network-traffic
/// profile: `alpha = 0.999`, memory limit 200, 100-dimensional embeddings
/// and an initial cut-off of 16.7e-3 events per minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Setup period: scoring starts strictly after this time.
    pub t_setup: u64,
    /// Model update interval.
    pub w_upd: u64,
    /// Frequency decay rate, in `[0, 1)`.
    pub alpha: f64,
    /// Skeleton capacity `M`; `None` is unbounded.
    pub mem_limit: Option<usize>,
    /// Embedding dimension `m`.
    pub dim: usize,
    /// Initial cut-off frequency.
    pub f_th_init: f64,
    /// Canonicalize types and use an identity mixing matrix.
    pub undirected: bool,
    pub seed: u64,
    /// Score the same-source/same-destination group channels.
    pub group_channels: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            t_setup: 5000,
            w_upd: 720,
            alpha: 0.999,
            mem_limit: Some(200),
            dim: 100,
            f_th_init: 16.7e-3,
            undirected: false,
            seed: 42,
            group_channels: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_setup == 0 {
            return Err(Error::InvalidConfig("t_setup must be >= 1".into()));
        }
        if self.w_upd == 0 {
            return Err(Error::InvalidConfig("w_upd must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        if self.mem_limit == Some(0) {
            return Err(Error::InvalidConfig(
                "mem_limit must be positive or unbounded".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.f_th_init.is_nan() || self.f_th_init < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "f_th must be >= 0, got {}",
                self.f_th_init
            )));
        }
        if self.optimizer.step_size <= 0.0 {
            return Err(Error::InvalidConfig("step_size must be positive".into()));
        }
        Ok(())
    }

    /// Applies `key = value` lines (one per line, `#` comments) whose keys
    /// mirror the flat field names, e.g. `alpha = 0.99`, `mem_limit = inf`,
    /// `epochs = 20`.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("config line {}: expected key = value", i + 1))
            })?;
            self.apply_key(key.trim(), value.trim())
                .map_err(|e| Error::InvalidConfig(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("invalid value for {key}: {value:?}")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::InvalidConfig(format!(
                    "invalid flag for {key}: {value:?}"
                ))),
            }
        }
        match key {
            "t_setup" => self.t_setup = num(key, value)?,
            "w_upd" => self.w_upd = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "mem_limit" => {
                self.mem_limit = match value {
                    "inf" | "unbounded" | "none" => None,
                    _ => Some(num(key, value)?),
                }
            }
            "dim" => self.dim = num(key, value)?,
            "f_th" | "f_th_init" => self.f_th_init = num(key, value)?,
            "undirected" => self.undirected = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "group_channels" => self.group_channels = flag(key, value)?,
            "epochs" => self.optimizer.epochs = num(key, value)?,
            "step_size" => self.optimizer.step_size = num(key, value)?,
            "batch_pairs" => self.optimizer.batch_pairs = num(key, value)?,
            "batch_outside" => self.optimizer.batch_outside = num(key, value)?,
            "neg_per_node" => self.optimizer.neg_per_node = num(key, value)?,
            "clip_norm" => {
                self.optimizer.clip_norm = match value {
                    "none" => None,
                    _ => Some(num(key, value)?),
                }
            }
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Resolved settings as config-file text, used for output headers.
    pub fn to_config_text(&self) -> String {
        let mem = match self.mem_limit {
            Some(m) => m.to_string(),
            None => "inf".into(),
        };
        let clip = match self.optimizer.clip_norm {
            Some(c) => c.to_string(),
            None => "none".into(),
        };
        format!(
            "t_setup = {}\nw_upd = {}\nalpha = {}\nmem_limit = {}\ndim = {}\nf_th = {}\n\
             undirected = {}\nseed = {}\ngroup_channels = {}\nepochs = {}\nstep_size = {}\n\
             batch_pairs = {}\nbatch_outside = {}\nneg_per_node = {}\nclip_norm = {}",
            self.t_setup,
            self.w_upd,
            self.alpha,
            mem,
            self.dim,
            self.f_th_init,
            self.undirected,
            self.seed,
            self.group_channels,
            self.optimizer.epochs,
            self.optimizer.step_size,
            self.optimizer.batch_pairs,
            self.optimizer.batch_outside,
            self.optimizer.neg_per_node,
            clip,
        )
    }
}

/// Counters reported at the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events: u64,
    pub ticks: u64,
    pub scored_copies: u64,
    pub updates: u64,
    pub evictions: u64,
    pub final_f_th: f64,
}

/// One embedding refit that actually happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateEvent {
    pub time: u64,
    pub global: bool,
}

/// The streaming engine. Feed it strictly increasing ticks.
#[derive(Debug)]
pub struct Engine {
    params: HyperParams,
    skel: SkeletonMap,
    act: ActiveSet,
    emb: EmbeddingTable,
    q: MixMatrix,
    idx: LastSeenIndex,
    update_counter: u64,
    rng: ChaCha20Rng,
    events: u64,
    ticks: u64,
    scored: u64,
    last_time: Option<u64>,
    update_log: Vec<UpdateEvent>,
}

impl Engine {
    pub fn new(params: HyperParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
        let q = if params.undirected {
            MixMatrix::identity(params.dim)
        } else {
            MixMatrix::gaussian(params.dim, &mut rng)
        };
        Ok(Self {
            skel: SkeletonMap::new(params.alpha, params.mem_limit, params.f_th_init),
            act: ActiveSet::new(),
            emb: EmbeddingTable::new(params.dim),
            q,
            idx: LastSeenIndex::new(),
            update_counter: 0,
            rng,
            events: 0,
            ticks: 0,
            scored: 0,
            last_time: None,
            update_log: Vec::new(),
            params,
        })
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn skeleton(&self) -> &SkeletonMap {
        &self.skel
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.emb
    }

    pub fn mix_matrix(&self) -> &MixMatrix {
        &self.q
    }

    pub fn cutoff(&self) -> f64 {
        self.skel.cutoff()
    }

    pub fn active_len(&self) -> usize {
        self.act.len()
    }

    pub fn update_log(&self) -> &[UpdateEvent] {
        &self.update_log
    }

    /// Processes one tick: detect (after setup), union, index refresh, and
    /// possibly one embedding update.
    pub fn process_tick(&mut self, tick: &Tick, mut sink: impl FnMut(&ScoreRecord)) -> Result<()> {
        if let Some(last) = self.last_time {
            if tick.time <= last {
                return Err(Error::OutOfOrder {
                    index: self.events,
                    time: tick.time,
                    current: last,
                });
            }
        }
        self.last_time = Some(tick.time);
        self.ticks += 1;

        if tick.time > self.params.t_setup {
            let records = detect_tick(
                tick,
                &self.skel,
                &self.idx,
                &self.emb,
                &self.q,
                self.skel.cutoff(),
                self.params.group_channels,
            )?;
            self.scored += records.len() as u64;
            for r in &records {
                sink(r);
            }
        }

        let mut evicted_nodes: IndexSet<NodeId> = IndexSet::new();
        for (ty, count) in &tick.typed_counts {
            self.events += count.slices.len() as u64;
            let outcome = self
                .skel
                .union_edge(&mut self.act, *ty, count.weight, tick.time);
            for gone in outcome.evicted {
                evicted_nodes.insert(gone.src);
                evicted_nodes.insert(gone.dst);
            }
        }
        self.idx.record_tick(tick);
        for node in evicted_nodes {
            if !self.skel.contains_node(node) {
                self.idx.prune_node(node);
            }
        }

        let deadline = self.params.t_setup + self.update_counter * self.params.w_upd;
        if tick.time >= deadline {
            let mode = if self.update_counter == 0 {
                FitMode::Global
            } else {
                FitMode::Local
            };
            ffac_update(
                &self.skel,
                &self.act,
                &mut self.emb,
                &self.q,
                self.skel.cutoff(),
                &self.params.optimizer,
                mode,
                &mut self.rng,
            )?;
            self.update_log.push(UpdateEvent {
                time: tick.time,
                global: mode == FitMode::Global,
            });
            // Jump past every deadline this tick already crossed.
            self.update_counter = (tick.time - self.params.t_setup) / self.params.w_upd + 1;
            self.act.clear();
        }
        Ok(())
    }

    /// Drives the engine over a whole tick stream.
    pub fn run<I>(&mut self, ticks: I, mut sink: impl FnMut(&ScoreRecord)) -> Result<RunSummary>
    where
        I: IntoIterator<Item = Result<Tick>>,
    {
        for tick in ticks {
            self.process_tick(&tick?, &mut sink)?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            events: self.events,
            ticks: self.ticks,
            scored_copies: self.scored,
            updates: self.update_log.len() as u64,
            evictions: self.skel.evictions(),
            final_f_th: self.skel.cutoff(),
        }
    }

    /// Serializes the complete engine state. Restoring the snapshot and
    /// feeding the same remaining stream reproduces the original outputs
    /// bit for bit.
    pub fn checkpoint(&self) -> Vec<u8> {
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            params: self.params.clone(),
            skel: self.skel.clone(),
            act: self.act.clone(),
            emb: self.emb.clone(),
            q: self.q.clone(),
            idx: self.idx.clone(),
            update_counter: self.update_counter,
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
            events: self.events,
            ticks: self.ticks,
            scored: self.scored,
            last_time: self.last_time,
            update_times: self.update_log.iter().map(|u| (u.time, u.global)).collect(),
        };
        serde_json::to_vec(&snap).expect("engine state is serializable")
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_slice(bytes).map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion {
                found: snap.version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let mut skel = snap.skel;
        skel.rebuild_heap();
        let mut rng = ChaCha20Rng::from_seed(snap.rng_seed);
        rng.set_word_pos(snap.rng_word_pos);
        Ok(Self {
            params: snap.params,
            skel,
            act: snap.act,
            emb: snap.emb,
            q: snap.q,
            idx: snap.idx,
            update_counter: snap.update_counter,
            rng,
            events: snap.events,
            ticks: snap.ticks,
            scored: snap.scored,
            last_time: snap.last_time,
            update_log: snap
                .update_times
                .into_iter()
                .map(|(time, global)| UpdateEvent { time, global })
                .collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    params: HyperParams,
    skel: SkeletonMap,
    act: ActiveSet,
    emb: EmbeddingTable,
    q: MixMatrix,
    idx: LastSeenIndex,
    update_counter: u64,
    rng_seed: [u8; 32],
    rng_word_pos: u128,
    events: u64,
    ticks: u64,
    scored: u64,
    last_time: Option<u64>,
    update_times: Vec<(u64, bool)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{InteractionType, TypeCount};
    use indexmap::IndexMap;

    fn ty(s: u32, d: u32) -> InteractionType {
        InteractionType::new(NodeId(s), NodeId(d))
    }

    fn tick_of(time: u64, types: &[(InteractionType, u64)]) -> Tick {
        let mut idx = time * 1000;
        let typed_counts: IndexMap<_, _> = types
            .iter()
            .map(|&(t, w)| {
                let count = TypeCount {
                    weight: w,
                    slices: vec![(idx, w)],
                };
                idx += 1;
                (t, count)
            })
            .collect();
        Tick { time, typed_counts }
    }

    fn small_params() -> HyperParams {
        HyperParams {
            t_setup: 10,
            w_upd: 5,
            alpha: 0.9,
            mem_limit: None,
            dim: 4,
            f_th_init: 0.01,
            seed: 5,
            ..HyperParams::default()
        }
    }

    #[test]
    fn empty_stream_yields_empty_summary() {
        let mut engine = Engine::new(small_params()).unwrap();
        let summary = engine.run(Vec::new(), |_| {}).unwrap();
        assert_eq!(
            summary,
            RunSummary {
                final_f_th: 0.01,
                ..RunSummary::default()
            }
        );
    }

    #[test]
    fn no_scores_before_setup_but_skeleton_fills() {
        let mut engine = Engine::new(small_params()).unwrap();
        let ticks: Vec<_> = (1..=8).map(|t| Ok(tick_of(t, &[(ty(0, 1), 1)]))).collect();
        let mut n = 0;
        let summary = engine.run(ticks, |_| n += 1).unwrap();
        assert_eq!(n, 0);
        assert_eq!(summary.scored_copies, 0);
        assert_eq!(engine.skeleton().len(), 1);
    }

    #[test]
    fn update_cadence_follows_setup_and_window() {
        let mut engine = Engine::new(small_params()).unwrap();
        let ticks: Vec<_> = (1..=30).map(|t| Ok(tick_of(t, &[(ty(0, 1), 1)]))).collect();
        engine.run(ticks, |_| {}).unwrap();
        let log = engine.update_log();
        let times: Vec<u64> = log.iter().map(|u| u.time).collect();
        assert_eq!(times, vec![10, 15, 20, 25, 30]);
        let globals: Vec<bool> = log.iter().map(|u| u.global).collect();
        assert_eq!(globals, vec![true, false, false, false, false]);
    }

    #[test]
    fn missed_deadlines_fire_one_update_not_a_burst() {
        let mut engine = Engine::new(small_params()).unwrap();
        for t in [1u64, 9, 23] {
            engine
                .process_tick(&tick_of(t, &[(ty(0, 1), 1)]), |_| {})
                .unwrap();
        }
        let times: Vec<u64> = engine.update_log().iter().map(|u| u.time).collect();
        assert_eq!(times, vec![23]);
        // Next deadline is t_setup + 3 * w_upd = 25.
        engine
            .process_tick(&tick_of(24, &[(ty(0, 1), 1)]), |_| {})
            .unwrap();
        assert_eq!(engine.update_log().len(), 1);
        engine
            .process_tick(&tick_of(25, &[(ty(0, 1), 1)]), |_| {})
            .unwrap();
        assert_eq!(engine.update_log().len(), 2);
    }

    #[test]
    fn active_set_clears_after_each_update() {
        let mut engine = Engine::new(small_params()).unwrap();
        for t in 1..=10u64 {
            engine
                .process_tick(&tick_of(t, &[(ty(0, 1), 1)]), |_| {})
                .unwrap();
        }
        assert_eq!(engine.active_len(), 0);
        engine
            .process_tick(&tick_of(11, &[(ty(2, 3), 1)]), |_| {})
            .unwrap();
        assert_eq!(engine.active_len(), 1);
    }

    #[test]
    fn scoring_before_first_fit_uses_fallback() {
        // First tick lands past the setup time: detection happens before the
        // first fit, so the score uses the cut-off fallback intensity.
        let mut engine = Engine::new(small_params()).unwrap();
        let mut scores = Vec::new();
        engine
            .process_tick(&tick_of(12, &[(ty(0, 1), 1)]), |r| scores.push(r.score))
            .unwrap();
        assert_eq!(scores, vec![1.0]); // f_th / f_th
        assert_eq!(
            engine.update_log().len(),
            1,
            "fit fires at the same tick after scoring"
        );
    }

    #[test]
    fn rejects_non_increasing_ticks() {
        let mut engine = Engine::new(small_params()).unwrap();
        engine
            .process_tick(&tick_of(5, &[(ty(0, 1), 1)]), |_| {})
            .unwrap();
        assert!(engine
            .process_tick(&tick_of(5, &[(ty(0, 1), 1)]), |_| {})
            .is_err());
        assert!(engine
            .process_tick(&tick_of(4, &[(ty(0, 1), 1)]), |_| {})
            .is_err());
    }

    #[test]
    fn memory_stays_bounded_with_many_types() {
        let params = HyperParams {
            mem_limit: Some(20),
            ..small_params()
        };
        let mut engine = Engine::new(params).unwrap();
        for t in 1..=300u64 {
            let types = [(ty(t as u32, 10_000 + t as u32), 1), (ty(0, 1), 1)];
            engine.process_tick(&tick_of(t, &types), |_| {}).unwrap();
            assert!(engine.skeleton().len() <= 20);
        }
        assert!(
            engine.cutoff() > 0.01,
            "cut-off should have risen under pressure"
        );
        assert!(engine.summary().evictions > 0);
    }

    fn drive(engine: &mut Engine, times: std::ops::RangeInclusive<u64>) -> Vec<ScoreRecord> {
        let mut out = Vec::new();
        for t in times {
            let types = [(ty((t % 4) as u32, 100 + (t % 3) as u32), 1 + t % 2)];
            engine
                .process_tick(&tick_of(t, &types), |r| out.push(r.clone()))
                .unwrap();
        }
        out
    }

    #[test]
    fn checkpoint_roundtrip_on_fresh_state() {
        let a = Engine::new(small_params()).unwrap();
        let mut b = Engine::restore(&a.checkpoint()).unwrap();
        let mut a = Engine::restore(&a.checkpoint()).unwrap();
        assert_eq!(drive(&mut a, 1..=40), drive(&mut b, 1..=40));
    }

    #[test]
    fn restore_rejects_corrupt_bytes() {
        assert!(matches!(
            Engine::restore(b"not json"),
            Err(Error::CorruptSnapshot(_))
        ));
        let engine = Engine::new(small_params()).unwrap();
        let mut bytes = engine.checkpoint();
        let len = bytes.len();
        bytes.truncate(len / 2);
        assert!(Engine::restore(&bytes).is_err());
    }

    #[test]
    fn restore_rejects_wrong_version() {
        let engine = Engine::new(small_params()).unwrap();
        let text = String::from_utf8(engine.checkpoint()).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":9");
        match Engine::restore(bumped.as_bytes()) {
            Err(Error::SnapshotVersion {
                found: 9,
                expected: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checkpoint_branch_produces_identical_continuations() {
        let mut original = Engine::new(small_params()).unwrap();
        drive(&mut original, 1..=25);
        let snapshot = original.checkpoint();
        let mut branch = Engine::restore(&snapshot).unwrap();

        let from_original = drive(&mut original, 26..=60);
        let from_branch = drive(&mut branch, 26..=60);
        assert_eq!(from_original, from_branch);
        assert_eq!(original.summary(), branch.summary());
    }

    #[test]
    fn identical_runs_are_deterministic() {
        let run = || {
            let mut engine = Engine::new(small_params()).unwrap();
            let records = drive(&mut engine, 1..=50);
            (records, engine.summary())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_text_roundtrip_and_errors() {
        let mut p = HyperParams::default();
        p.apply_config_text("alpha = 0.5\nmem_limit = inf\n# comment\nepochs = 3\n")
            .unwrap();
        assert_eq!(p.alpha, 0.5);
        assert_eq!(p.mem_limit, None);
        assert_eq!(p.optimizer.epochs, 3);

        let mut q = HyperParams::default();
        q.apply_config_text(&p.to_config_text()).unwrap();
        assert_eq!(p, q);

        assert!(p.apply_config_text("nonsense = 1").is_err());
        assert!(p.apply_config_text("alpha 0.5").is_err());
        assert!(p.apply_config_text("alpha = fast").is_err());
    }

    #[test]
    fn validate_rejects_bad_params() {
        for (field, params) in [
            (
                "alpha",
                HyperParams {
                    alpha: 1.0,
                    ..HyperParams::default()
                },
            ),
            (
                "t_setup",
                HyperParams {
                    t_setup: 0,
                    ..HyperParams::default()
                },
            ),
            (
                "w_upd",
                HyperParams {
                    w_upd: 0,
                    ..HyperParams::default()
                },
            ),
            (
                "dim",
                HyperParams {
                    dim: 0,
                    ..HyperParams::default()
                },
            ),
            (
                "mem",
                HyperParams {
                    mem_limit: Some(0),
                    ..HyperParams::default()
                },
            ),
            (
                "f_th",
                HyperParams {
                    f_th_init: -0.1,
                    ..HyperParams::default()
                },
            ),
        ] {
            assert!(
                Engine::new(params).is_err(),
                "{field} should fail validation"
            );
        }
    }
}
