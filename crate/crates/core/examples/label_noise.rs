//! Transition matrices and label corruption.
//!
//! ```bash
//! cargo run --example label_noise
//! ```

use unionnet::dataset::{generate_sbm, SbmSpec};
use unionnet::noise::{build_transition, corrupt_labels, NoiseType};

fn main() -> unionnet::Result<()> {
    for noise in [NoiseType::Symmetric, NoiseType::Pairflip] {
        let q = build_transition(noise, 0.4, 3)?;
        println!("{noise} 40%:\n{:.2}", q.matrix());
    }

    let graph = generate_sbm(&SbmSpec::fixture(0))?;
    let q = build_transition(NoiseType::Pairflip, 0.3, graph.num_classes())?;
    let noisy = corrupt_labels(&graph, &q, 11)?;
    println!(
        "pairflip 30% on {} training labels: {} flipped ({:.3})",
        graph.nodes_in(unionnet::graph::Split::Train).len(),
        noisy.flips.len(),
        noisy.flip_fraction(&graph)
    );
    noisy.write_flip_log(std::io::stdout().lock())?;
    Ok(())
}
