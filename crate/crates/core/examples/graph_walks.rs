//! Normalised adjacency and random-walk context on a small graph.
//!
//! ```bash
//! cargo run --example graph_walks
//! ```

use ndarray::Array2;
use unionnet::graph::{collect_context, normalize_adjacency, random_walk, Graph, Split, WalkConfig};
use unionnet::seed::stream_rng;

fn main() -> unionnet::Result<()> {
    // A 4-cycle with one chord.
    let edges = vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
    let graph = Graph::new(
        "cycle",
        Array2::eye(4),
        2,
        edges,
        vec![0, 0, 1, 1],
        vec![Split::Train; 4],
    )?;

    let adj = normalize_adjacency(&graph);
    println!("normalised adjacency ({} stored entries):", adj.nnz());
    for row in adj.to_dense().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", cells.join(" "));
    }

    let mut rng = stream_rng(7, 0);
    println!("walk from 0: {:?}", random_walk(&graph, 0, 6, &mut rng));

    let cfg = WalkConfig {
        walk_length: 3,
        walks_per_node: 4,
        seed: 7,
    };
    let context = collect_context(&graph, 1, &cfg, &mut rng);
    println!("context of node 1 ({} visits): {context:?}", context.len());
    Ok(())
}
