//! Maximum-likelihood factorization of skeleton frequencies into node
//! embeddings.
//!
//! Each tracked pair's frequency is modeled as exponential with intensity
//! `lambda_sd = exp(h_s^T Q h_d)`. Fitting maximizes the log likelihood of
//! the stored skeleton frequencies plus negative terms at the cut-off
//! frequency for pairs the skeleton does not track. Updates are global at
//! setup (all active nodes) and local afterwards (embeddings of nodes
//! outside the active set stay frozen).

use std::io::Write;

use indexmap::{IndexMap, IndexSet};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::skeleton::{ActiveSet, SkeletonMap};
use crate::stream::{InteractionType, Interner, NodeId};
use crate::{Error, Result};

/// Exponent clamp for `h_s^T Q h_d`, far outside any realistic fitted range.
const EXP_CLAMP: f64 = 30.0;

/// The fixed mixing matrix: random Gaussian for directed interactions,
/// identity for undirected ones. Drawn once per run and never updated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl MixMatrix {
    pub fn gaussian(dim: usize, rng: &mut ChaCha20Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data = (0..dim * dim).map(|_| normal.sample(rng)).collect();
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Q h`
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            *out_i = row.iter().zip(h).map(|(q, x)| q * x).sum();
        }
        out
    }

    /// `Q^T h`
    pub fn apply_transpose(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.data[j * self.dim..(j + 1) * self.dim];
            for (out_i, q) in out.iter_mut().zip(row) {
                *out_i += q * hj;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp(h_s^T Q h_d)` with the exponent clamped to `[-30, 30]`.
pub fn intensity(h_s: &[f64], h_d: &[f64], q: &MixMatrix) -> f64 {
    dot(h_s, &q.apply(h_d)).clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Log likelihood of observing frequency `f` under intensity `lambda`:
/// `-ln(lambda) - f / lambda`.
pub fn log_likelihood(f: f64, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::NonPositiveLambda(lambda));
    }
    Ok(-lambda.ln() - f / lambda)
}

/// Per-node embeddings of the skeleton's nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    #[serde(with = "indexmap::map::serde_seq")]
    vectors: IndexMap<NodeId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.vectors.get(&node).map(Vec::as_slice)
    }

    pub fn insert(&mut self, node: NodeId, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim);
        self.vectors.insert(node, vector);
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &[f64])> {
        self.vectors.iter().map(|(n, v)| (*n, v.as_slice()))
    }

    /// Intensity of a pair, or `None` when either embedding is missing.
    pub fn pair_intensity(&self, ty: &InteractionType, q: &MixMatrix) -> Option<f64> {
        let hs = self.get(ty.src)?;
        let hd = self.get(ty.dst)?;
        Some(intensity(hs, hd, q))
    }

    /// Drops nodes that left the skeleton and initializes embeddings for
    /// nodes that joined it, iid Gaussian with standard deviation
    /// `1/sqrt(dim)` so initial intensities start near one.
    pub fn sync_with_skeleton(&mut self, skel: &SkeletonMap, rng: &mut ChaCha20Rng) {
        let stale: Vec<NodeId> = self
            .vectors
            .keys()
            .copied()
            .filter(|n| !skel.contains_node(*n))
            .collect();
        for node in stale {
            self.vectors.shift_remove(&node);
        }
        let normal = Normal::new(0.0, 1.0 / (self.dim as f64).sqrt()).unwrap();
        for node in skel.nodes().collect::<Vec<_>>() {
            if !self.vectors.contains_key(&node) {
                let v: Vec<f64> = (0..self.dim).map(|_| normal.sample(rng)).collect();
                self.vectors.insert(node, v);
            }
        }
    }

    /// Dump: one `node_id,h_1,...,h_m` line per node.
    pub fn write_dump<W: Write>(&self, mut out: W, interner: &Interner) -> Result<()> {
        for (node, vector) in self.iter() {
            write!(out, "{}", interner.name(node))?;
            for x in vector {
                write!(out, ",{x:.15e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Gradient-ascent settings for the factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Sampled-batch gradient steps per update call.
    pub epochs: u32,
    pub step_size: f64,
    /// Cap on the active-pair mini-batch in local mode.
    pub batch_pairs: usize,
    /// Cap on the sampled outside-node pool in local mode.
    pub batch_outside: usize,
    /// Negative pairs sampled per anchor node.
    pub neg_per_node: u32,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            step_size: 0.01,
            batch_pairs: 1024,
            batch_outside: 256,
            neg_per_node: 5,
            clip_norm: Some(5.0),
        }
    }
}

/// Global refit (at setup) or local refinement (per update window).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Global,
    Local,
}

/// Sum of `log_likelihood` terms over `sample`, taking each pair's target
/// frequency from the skeleton when tracked and `f_th` otherwise.
pub fn objective(
    skel: &SkeletonMap,
    emb: &EmbeddingTable,
    q: &MixMatrix,
    f_th: f64,
    sample: &[InteractionType],
) -> Result<f64> {
    let mut total = 0.0;
    for ty in sample {
        let f = skel.lookup(ty).map(|e| e.freq).unwrap_or(f_th);
        let lambda = emb
            .pair_intensity(ty, q)
            .ok_or_else(|| Error::InvalidConfig(format!("missing embedding for pair {ty:?}")))?;
        total += log_likelihood(f, lambda)?;
    }
    Ok(total)
}

/// Same sum over pairs with pre-resolved target frequencies.
pub fn objective_over_pairs(
    emb: &EmbeddingTable,
    q: &MixMatrix,
    pairs: &[(InteractionType, f64)],
) -> Result<f64> {
    let mut total = 0.0;
    for (ty, f) in pairs {
        let lambda = emb
            .pair_intensity(ty, q)
            .ok_or_else(|| Error::InvalidConfig(format!("missing embedding for pair {ty:?}")))?;
        total += log_likelihood(*f, lambda)?;
    }
    Ok(total)
}

/// Accumulated ascent gradients of [`objective_over_pairs`] with respect to
/// the embeddings of `update_nodes`; all other embeddings are treated as
/// constants. Per pair: `d/dh_s = (f/lambda - 1) Q h_d` and
/// `d/dh_d = (f/lambda - 1) Q^T h_s`.
pub fn pair_gradients(
    emb: &EmbeddingTable,
    q: &MixMatrix,
    pairs: &[(InteractionType, f64)],
    update_nodes: &IndexSet<NodeId>,
) -> Result<IndexMap<NodeId, Vec<f64>>> {
    let dim = emb.dim();
    let mut grads: IndexMap<NodeId, Vec<f64>> =
        update_nodes.iter().map(|n| (*n, vec![0.0; dim])).collect();
    for (ty, f) in pairs {
        let hs = emb
            .get(ty.src)
            .ok_or_else(|| Error::InvalidConfig(format!("missing embedding for {:?}", ty.src)))?;
        let hd = emb
            .get(ty.dst)
            .ok_or_else(|| Error::InvalidConfig(format!("missing embedding for {:?}", ty.dst)))?;
        let lambda = intensity(hs, hd, q);
        let coef = f / lambda - 1.0;
        let qhd = q.apply(hd);
        let qths = q.apply_transpose(hs);
        if let Some(g) = grads.get_mut(&ty.src) {
            for (gi, qi) in g.iter_mut().zip(&qhd) {
                *gi += coef * qi;
            }
        }
        if let Some(g) = grads.get_mut(&ty.dst) {
            for (gi, qi) in g.iter_mut().zip(&qths) {
                *gi += coef * qi;
            }
        }
    }
    Ok(grads)
}

/// One ascent step over `pairs`: accumulate, clip the global gradient norm,
/// and move only the embeddings in `update_nodes`.
pub fn gradient_step(
    emb: &mut EmbeddingTable,
    q: &MixMatrix,
    pairs: &[(InteractionType, f64)],
    step_size: f64,
    update_nodes: &IndexSet<NodeId>,
    clip_norm: Option<f64>,
) -> Result<()> {
    let grads = pair_gradients(emb, q, pairs, update_nodes)?;
    let mut scale = step_size;
    if let Some(clip) = clip_norm {
        let norm: f64 = grads
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if norm > clip {
            scale *= clip / norm;
        }
    }
    for (node, grad) in grads {
        if let Some(v) = emb.vectors.get_mut(&node) {
            for (vi, gi) in v.iter_mut().zip(grad) {
                *vi += scale * gi;
            }
        }
    }
    Ok(())
}

/// One factorization update.
///
/// Embeddings are first synchronized with the skeleton's node set. Each
/// epoch then builds one sampled pair batch and takes one ascent step:
/// anchors contribute their tracked pairs as positive terms and
/// `neg_per_node` sampled non-neighbors as cut-off terms. In global mode the
/// anchors are all active nodes and negatives come from anywhere in the
/// skeleton; in local mode anchors come from a sampled active-pair batch,
/// the candidate pool adds sampled outside nodes, and only active-node
/// embeddings move.
#[allow(clippy::too_many_arguments)]
pub fn ffac_update(
    skel: &SkeletonMap,
    active: &ActiveSet,
    emb: &mut EmbeddingTable,
    q: &MixMatrix,
    f_th: f64,
    cfg: &OptimizerConfig,
    mode: FitMode,
    rng: &mut ChaCha20Rng,
) -> Result<()> {
    if active.is_empty() {
        return Ok(());
    }
    emb.sync_with_skeleton(skel, rng);

    // Adjacency over the current skeleton, built once per update.
    let mut neighbors: IndexMap<NodeId, IndexSet<NodeId>> = IndexMap::new();
    let mut incident: IndexMap<NodeId, Vec<InteractionType>> = IndexMap::new();
    for (ty, _) in skel.iter() {
        neighbors.entry(ty.src).or_default().insert(ty.dst);
        neighbors.entry(ty.dst).or_default().insert(ty.src);
        incident.entry(ty.src).or_default().push(*ty);
        if ty.dst != ty.src {
            incident.entry(ty.dst).or_default().push(*ty);
        }
    }

    let update_nodes = active.nodes();

    for _ in 0..cfg.epochs {
        let (anchors, pool): (IndexSet<NodeId>, IndexSet<NodeId>) = match mode {
            FitMode::Global => (update_nodes.clone(), update_nodes.clone()),
            FitMode::Local => {
                let k = cfg.batch_pairs.min(active.len());
                let picked = rand::seq::index::sample(rng, active.len(), k);
                let mut anchors = IndexSet::new();
                for i in picked {
                    let ty = active.iter().nth(i).unwrap();
                    anchors.insert(ty.src);
                    anchors.insert(ty.dst);
                }
                let outside: Vec<NodeId> =
                    skel.nodes().filter(|n| !update_nodes.contains(n)).collect();
                let k_out = cfg.batch_outside.min(outside.len());
                let mut pool = anchors.clone();
                for i in rand::seq::index::sample(rng, outside.len(), k_out) {
                    pool.insert(outside[i]);
                }
                (anchors, pool)
            }
        };

        let mut batch: Vec<(InteractionType, f64)> = Vec::new();
        let mut seen: IndexSet<InteractionType> = IndexSet::new();
        for &v in &anchors {
            if let Some(types) = incident.get(&v) {
                for ty in types {
                    let partner = if ty.src == v { ty.dst } else { ty.src };
                    if pool.contains(&partner) && seen.insert(*ty) {
                        let f = skel.lookup(ty).expect("incident pair tracked").freq;
                        batch.push((*ty, f));
                    }
                }
            }
            if cfg.neg_per_node > 0 && !pool.is_empty() {
                let adj = neighbors.get(&v);
                let mut taken = 0;
                let mut attempts = 0;
                let max_attempts = 8 * cfg.neg_per_node + 20;
                while taken < cfg.neg_per_node && attempts < max_attempts {
                    attempts += 1;
                    let u = *pool.get_index(rng.random_range(0..pool.len())).unwrap();
                    if adj.is_some_and(|a| a.contains(&u)) {
                        continue;
                    }
                    let ty = InteractionType::new(v, u);
                    if seen.insert(ty) {
                        batch.push((ty, f_th));
                        taken += 1;
                    }
                }
            }
        }
        if batch.is_empty() {
            continue;
        }
        gradient_step(emb, q, &batch, cfg.step_size, &update_nodes, cfg.clip_norm)?;
    }
    Ok(())
}
