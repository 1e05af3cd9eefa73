//! Fitting embeddings to a two-community skeleton and reading the learned
//! structure back out of the intensities: in-group pairs end near the
//! regular frequency, cross-group pairs near the cut-off. A probe
//! interaction into the other community therefore scores much higher than
//! the same observation within the community.
//!
//! ```text
//! cargo run -p ffade --example community_embeddings
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ffade::detector::pair_score;
use ffade::factorizer::{ffac_update, EmbeddingTable, FitMode, MixMatrix, OptimizerConfig};
use ffade::skeleton::{ActiveSet, SkeletonMap};
use ffade::stream::{InteractionType, NodeId};

fn main() -> Result<(), ffade::Error> {
    let group = 4u32;
    let regular_freq = 5.0;
    let f_th = 0.005;
    let alpha = 0.9;

    // One event of the right weight per ordered in-group pair stores the
    // target aggregated frequency directly.
    let mut skel = SkeletonMap::new(alpha, None, 0.0);
    let mut act = ActiveSet::new();
    let w = (regular_freq / (1.0 - alpha)).round() as u64;
    for base in [0, group] {
        for i in 0..group {
            for j in 0..group {
                if i != j {
                    skel.union_edge(
                        &mut act,
                        InteractionType::new(NodeId(base + i), NodeId(base + j)),
                        w,
                        1,
                    );
                }
            }
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let q = MixMatrix::gaussian(8, &mut rng);
    let mut emb = EmbeddingTable::new(8);
    let cfg = OptimizerConfig {
        epochs: 400,
        step_size: 0.05,
        neg_per_node: 4,
        ..OptimizerConfig::default()
    };
    ffac_update(
        &skel,
        &act,
        &mut emb,
        &q,
        f_th,
        &cfg,
        FitMode::Global,
        &mut rng,
    )?;

    let mut in_group = Vec::new();
    let mut cross = Vec::new();
    for s in 0..2 * group {
        for d in 0..2 * group {
            if s == d {
                continue;
            }
            let lambda = emb
                .pair_intensity(&InteractionType::new(NodeId(s), NodeId(d)), &q)
                .expect("all nodes embedded");
            if (s < group) == (d < group) {
                in_group.push(lambda);
            } else {
                cross.push(lambda);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("fitted intensities (targets: in-group {regular_freq}, cross-group {f_th}):");
    println!("  mean in-group lambda:    {:.4}", mean(&in_group));
    println!("  mean cross-group lambda: {:.6}", mean(&cross));

    let probe = 1.0;
    let same = pair_score(
        probe,
        &InteractionType::new(NodeId(0), NodeId(1)),
        &emb,
        &q,
        f_th,
    );
    let other = pair_score(
        probe,
        &InteractionType::new(NodeId(0), NodeId(group)),
        &emb,
        &q,
        f_th,
    );
    println!("\nprobe at observed frequency {probe}:");
    println!("  to a same-group node:  score {same:.2}");
    println!(
        "  to an other-group node: score {other:.2} ({:.0}x higher)",
        other / same
    );
    Ok(())
}
