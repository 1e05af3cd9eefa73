//! Engine state snapshots: serialize mid-stream, restore, and continue.
//! The restored engine reproduces the original score stream bit for bit,
//! including the random state driving embedding updates.
//!
//! ```text
//! cargo run -p ffade --example checkpoint_resume
//! ```

use ffade::engine::{Engine, HyperParams};
use ffade::evalgen::{generate, SyntheticConfig};
use ffade::factorizer::OptimizerConfig;
use ffade::stream::coalesce_into_ticks;

fn main() -> Result<(), ffade::Error> {
    let stream = generate(&SyntheticConfig {
        horizon: 2000,
        inject_after: 300,
        n_injections: 6,
        seed: 13,
        ..SyntheticConfig::default()
    })?;
    let ticks = coalesce_into_ticks(&stream.edges)?;
    let split = ticks.len() / 2;
    let params = HyperParams {
        t_setup: 200,
        w_upd: 200,
        alpha: 0.99,
        mem_limit: Some(300),
        dim: 8,
        f_th_init: 0.005,
        seed: 4,
        optimizer: OptimizerConfig {
            epochs: 10,
            step_size: 0.05,
            ..Default::default()
        },
        ..HyperParams::default()
    };

    let mut engine = Engine::new(params)?;
    for tick in &ticks[..split] {
        engine.process_tick(tick, |_| {})?;
    }
    let snapshot = engine.checkpoint();
    println!("checkpointed after {split} ticks: {} bytes", snapshot.len());

    let mut resumed = Engine::restore(&snapshot)?;
    let mut original_scores = Vec::new();
    let mut resumed_scores = Vec::new();
    for tick in &ticks[split..] {
        engine.process_tick(tick, |r| original_scores.push(r.score))?;
        resumed.process_tick(tick, |r| resumed_scores.push(r.score))?;
    }

    let identical = original_scores
        .iter()
        .zip(&resumed_scores)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!(
        "continued both engines over {} ticks: {} scores each, bit-identical: {identical}",
        ticks.len() - split,
        original_scores.len()
    );
    assert!(identical && original_scores.len() == resumed_scores.len());
    Ok(())
}
