//! Generate a stochastic-block-model graph, write it as a bundle and load it back.
//!
//! ```bash
//! cargo run --example synthetic_dataset -- /tmp/sbm
//! ```

use unionnet::dataset::{generate_sbm, load_bundle, write_bundle, SbmSpec};
use unionnet::graph::Split;

fn main() -> unionnet::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("unionnet-sbm"));

    let graph = generate_sbm(&SbmSpec::fixture(0))?;
    write_bundle(&graph, &dir)?;
    let loaded = load_bundle(&dir)?;
    assert_eq!(loaded, graph);

    let mut within = 0;
    for &(u, v) in loaded.edges() {
        within += usize::from(loaded.labels()[u] == loaded.labels()[v]);
    }
    println!("{} written to {}", loaded.name(), dir.display());
    println!(
        "  nodes {}  edges {} ({} within blocks)",
        loaded.num_nodes(),
        loaded.edges().len(),
        within
    );
    for split in [Split::Train, Split::Val, Split::Test, Split::None] {
        println!("  {split:<5} {}", loaded.nodes_in(split).len());
    }
    Ok(())
}
