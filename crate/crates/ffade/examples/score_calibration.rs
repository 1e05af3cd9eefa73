//! Scores are calibrated tail probabilities: when observations come from
//! the model's own exponential distribution, the fraction scoring above a
//! threshold tau is exp(-tau) regardless of the intensity. That makes
//! scores comparable across pairs and lets a consumer pick tau for a target
//! false positive rate.
//!
//! ```text
//! cargo run -p ffade --example score_calibration
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};

use ffade::detector::pair_score;
use ffade::factorizer::{EmbeddingTable, MixMatrix};
use ffade::stream::{InteractionType, NodeId};

fn main() {
    let n = 100_000;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    println!(
        "{:>8} {:>6} {:>12} {:>12}",
        "lambda", "tau", "empirical", "exp(-tau)"
    );
    for lambda in [0.1f64, 1.0, 10.0] {
        // Pin the pair intensity exactly: with a 1-d identity mix,
        // lambda = exp(h_s * h_d).
        let mut emb = EmbeddingTable::new(1);
        emb.insert(NodeId(0), vec![1.0]);
        emb.insert(NodeId(1), vec![lambda.ln()]);
        let q = MixMatrix::identity(1);
        let ty = InteractionType::new(NodeId(0), NodeId(1));

        let exp = Exp::new(1.0 / lambda).unwrap();
        let scores: Vec<f64> = (0..n)
            .map(|_| pair_score(exp.sample(&mut rng), &ty, &emb, &q, 0.0))
            .collect();
        for tau in [0.5f64, 1.0, 2.0, 3.0] {
            let rate = scores.iter().filter(|&&s| s > tau).count() as f64 / n as f64;
            println!("{lambda:>8} {tau:>6} {rate:>12.5} {:>12.5}", (-tau).exp());
        }
    }
}
