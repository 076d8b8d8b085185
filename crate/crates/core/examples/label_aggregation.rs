//! Support-set label aggregation for one anchor node, step by step.
//!
//! ```bash
//! cargo run --example label_aggregation
//! ```

use unionnet::dataset::{generate_sbm, SbmSpec};
use unionnet::gcn::{forward_eval, GcnParams};
use unionnet::graph::{collect_context, normalize_adjacency, Split, WalkConfig};
use unionnet::noise::{build_transition, corrupt_labels, NoiseType};
use unionnet::seed::stream_rng;
use unionnet::trainer::{train, Method, TrainConfig};
use unionnet::unionnet::{aggregate, attention_weights, build_support_set, estimate_anchors};

fn main() -> unionnet::Result<()> {
    let graph = generate_sbm(&SbmSpec::fixture(0))?;
    let q = build_transition(NoiseType::Symmetric, 0.4, 3)?;
    let noisy = corrupt_labels(&graph, &q, 1)?;

    // A briefly trained model gives informative hidden representations.
    let cfg = TrainConfig {
        method: Method::GcnCe,
        epochs: 40,
        pretrain_epochs: 0,
        patience: None,
        ..TrainConfig::default()
    };
    let params: GcnParams = train(&graph, &noisy.labels, &cfg)?.params;
    let state = forward_eval(&normalize_adjacency(&graph), graph.sparse_features(), &params)?;
    let predictions = state.predictions();

    let walk = WalkConfig::default();
    let anchor = noisy.flips.first().map_or(graph.nodes_in(Split::Train)[0], |f| f.node);
    let mut rng = stream_rng(walk.seed, anchor as u64);
    let context = collect_context(&graph, anchor, &walk, &mut rng);
    let support = build_support_set(
        &graph,
        anchor,
        &walk,
        &noisy.labels,
        &predictions,
        &mut stream_rng(3, 0),
    );
    let weights = attention_weights(state.embeddings(), &support);
    let result = aggregate(state.embeddings(), &support, graph.num_classes())?;

    println!(
        "anchor {anchor}: clean label {}, given {}",
        graph.labels()[anchor],
        noisy.labels[anchor]
    );
    println!(
        "  {} context visits, {} support members",
        context.len(),
        support.members.len()
    );
    let top = weights.iter().cloned().fold(0.0, f64::max);
    println!("  largest attention weight {top:.3}");
    println!("  class distribution {:.3?}", result.distribution);
    println!(
        "  reweight {:.3}, corrected label {} with confidence {:.3}",
        result.reweight, result.corrected_label, result.confidence
    );

    let all = estimate_anchors(&graph, state.embeddings(), &noisy.labels, &predictions, &walk, 0);
    let flipped: Vec<usize> = noisy.flips.iter().map(|f| f.node).collect();
    let mean = |keep: &dyn Fn(usize) -> bool| {
        let w: Vec<f64> = all.iter().filter(|e| keep(e.anchor)).map(|e| e.reweight).collect();
        w.iter().sum::<f64>() / w.len().max(1) as f64
    };
    println!(
        "mean reweight: clean anchors {:.3}, flipped anchors {:.3}",
        mean(&|a| !flipped.contains(&a)),
        mean(&|a| flipped.contains(&a))
    );
    Ok(())
}
