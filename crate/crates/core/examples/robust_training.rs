//! GCN against the full robust objective and its ablations at 40% symmetric noise.
//!
//! ```bash
//! cargo run --release --example robust_training -- [seeds]
//! ```

use unionnet::dataset::{generate_sbm, SbmSpec};
use unionnet::noise::{build_transition, corrupt_labels, NoiseType};
use unionnet::seed::Seeds;
use unionnet::trainer::{train, Method, TrainConfig};

fn main() -> unionnet::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let q = build_transition(NoiseType::Symmetric, 0.4, 3)?;

    println!("{:<12} test micro-F1 per seed", "method");
    for method in Method::ALL {
        let mut scores = Vec::new();
        for seed in 0..seeds {
            let graph = generate_sbm(&SbmSpec::fixture(100 + seed))?;
            let noisy = corrupt_labels(&graph, &q, Seeds::from_master(seed).noise)?;
            let cfg = TrainConfig {
                method,
                ..TrainConfig::default()
            }
            .with_master_seed(seed);
            scores.push(train(&graph, &noisy.labels, &cfg)?.test_f1);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        println!("{:<12} {mean:.4}  {scores:.3?}", method.as_str());
    }
    Ok(())
}
