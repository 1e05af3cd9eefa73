//! How the memory limit shapes the cut-off frequency: a smaller skeleton
//! evicts sooner, so the convergent f_th is higher and the model tracks a
//! narrower band of interaction frequencies. Larger limits lower the
//! cut-off and (up to a point) improve detection.
//!
//! ```text
//! cargo run -p ffade --example memory_sweep
//! ```

use ffade::engine::HyperParams;
use ffade::evalgen::{generate, sweep_memory, SyntheticConfig};
use ffade::factorizer::OptimizerConfig;

fn main() -> Result<(), ffade::Error> {
    let stream = generate(&SyntheticConfig {
        horizon: 5000,
        inject_after: 500,
        seed: 0,
        ..SyntheticConfig::default()
    })?;
    let params = HyperParams {
        t_setup: 500,
        w_upd: 250,
        alpha: 0.99,
        dim: 16,
        f_th_init: 0.005,
        seed: 0,
        optimizer: OptimizerConfig {
            epochs: 20,
            step_size: 0.05,
            ..Default::default()
        },
        ..HyperParams::default()
    };
    let limits = [Some(50), Some(100), Some(200), Some(400), None];
    let rows = sweep_memory(&stream, &params, &limits)?;
    println!("{:>10} {:>8} {:>12}", "mem_limit", "AUC", "final f_th");
    for row in rows {
        let mem = row
            .mem_limit
            .map(|m| m.to_string())
            .unwrap_or_else(|| "inf".into());
        println!("{mem:>10} {:>8.4} {:>12.5}", row.auc, row.final_f_th);
    }
    Ok(())
}
