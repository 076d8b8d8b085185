//! Plain two-layer GCN with cross entropy on clean labels.
//!
//! ```bash
//! cargo run --release --example gcn_baseline
//! ```

use unionnet::dataset::{generate_sbm, SbmSpec};
use unionnet::graph::Split;
use unionnet::trainer::{evaluate, train, Method, TrainConfig};

fn main() -> unionnet::Result<()> {
    let graph = generate_sbm(&SbmSpec::fixture(0))?;
    let cfg = TrainConfig {
        method: Method::GcnCe,
        epochs: 200,
        ..TrainConfig::default()
    }
    .with_master_seed(0);
    let run = train(&graph, graph.labels(), &cfg)?;

    for e in run.log.iter().step_by(25) {
        println!(
            "epoch {:>3}  loss {:>8.4}  train {:.3}  val {:.3}",
            e.epoch, e.losses.total, e.train_f1, e.val_f1
        );
    }
    println!(
        "best epoch {}: test micro-F1 {:.4} (recomputed {:.4}) in {:.2?}",
        run.best_epoch,
        run.test_f1,
        evaluate(&run.params, &graph, Split::Test)?,
        run.wall_time
    );
    Ok(())
}
