//! Minimal end-to-end run: generate a small synthetic stream, push it
//! through the engine, and print the highest-scoring interactions.
//!
//! ```text
//! cargo run -p ffade --example quickstart
//! ```

use ffade::engine::{Engine, HyperParams};
use ffade::evalgen::{generate, SyntheticConfig};
use ffade::factorizer::OptimizerConfig;
use ffade::stream::coalesce_into_ticks;

fn main() -> Result<(), ffade::Error> {
    let stream = generate(&SyntheticConfig {
        horizon: 2000,
        inject_after: 250,
        n_injections: 8,
        seed: 21,
        ..SyntheticConfig::default()
    })?;
    println!(
        "stream: {} events, {} anomalous records",
        stream.edges.len(),
        stream.labels.iter().filter(|&&l| l == 1).count()
    );

    let params = HyperParams {
        t_setup: 200,
        w_upd: 200,
        alpha: 0.99,
        mem_limit: Some(400),
        dim: 16,
        f_th_init: 0.005,
        seed: 1,
        optimizer: OptimizerConfig {
            epochs: 20,
            step_size: 0.05,
            ..Default::default()
        },
        ..HyperParams::default()
    };
    let mut engine = Engine::new(params)?;
    let mut records = Vec::new();
    let ticks = coalesce_into_ticks(&stream.edges)?;
    let summary = engine.run(ticks.into_iter().map(Ok), |r| records.push(r.clone()))?;
    println!(
        "processed {} events over {} ticks; {} updates, final f_th {:.4}",
        summary.events, summary.ticks, summary.updates, summary.final_f_th
    );

    records.sort_by(|a, b| b.score.total_cmp(&a.score));
    println!("\ntop 10 anomaly scores:");
    println!(
        "{:>8} {:>6} {:<14} {:>12} {:<9} label",
        "event", "time", "interaction", "score", "channel"
    );
    for r in records.iter().take(10) {
        let name = format!(
            "{} -> {}",
            stream.interner.name(r.ty.src),
            stream.interner.name(r.ty.dst)
        );
        println!(
            "{:>8} {:>6} {:<14} {:>12.2} {:<9} {}",
            r.event_index,
            r.time,
            name,
            r.score,
            r.channel.to_string(),
            stream.labels[r.event_index as usize]
        );
    }
    Ok(())
}
