//! Turning a per-interaction score stream into a per-period event view by
//! taking the maximum score in each bucket — the usual way to surface
//! "what happened this week" from minute-level scores.
//!
//! ```text
//! cargo run -p ffade --example weekly_events
//! ```

use ffade::engine::{Engine, HyperParams};
use ffade::evalgen::{aggregate_events, generate, SyntheticConfig};
use ffade::factorizer::OptimizerConfig;
use ffade::stream::coalesce_into_ticks;

fn main() -> Result<(), ffade::Error> {
    // Minute-granularity stream over ~6 weeks with a handful of bursts.
    let stream = generate(&SyntheticConfig {
        horizon: 6 * 10_080,
        inject_after: 10_080,
        n_injections: 4,
        base_freq: 0.01,
        seed: 17,
        ..SyntheticConfig::default()
    })?;
    let params = HyperParams {
        t_setup: 10_080,
        w_upd: 1440,
        alpha: 0.999,
        mem_limit: Some(400),
        dim: 16,
        f_th_init: 0.005,
        seed: 2,
        optimizer: OptimizerConfig {
            epochs: 10,
            step_size: 0.05,
            ..Default::default()
        },
        ..HyperParams::default()
    };
    let mut engine = Engine::new(params)?;
    let mut records = Vec::new();
    let ticks = coalesce_into_ticks(&stream.edges)?;
    engine.run(ticks.into_iter().map(Ok), |r| {
        records.push((r.time, r.score))
    })?;

    let injected_weeks: std::collections::BTreeSet<u64> = stream
        .edges
        .iter()
        .zip(&stream.labels)
        .filter(|&(_, &l)| l == 1)
        .map(|(e, _)| e.time / 10_080)
        .collect();

    println!("{:>6} {:>12} contains injection", "week", "max score");
    for (week, max_score) in aggregate_events(records, 10_080) {
        println!(
            "{week:>6} {max_score:>12.2} {}",
            if injected_weeks.contains(&week) {
                "yes"
            } else {
                "-"
            }
        );
    }
    Ok(())
}
