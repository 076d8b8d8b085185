//! Compare tape gradients of every objective against central differences.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use ndarray::Array2;
use rand::Rng;
use unionnet::gcn::GcnParams;
use unionnet::graph::NormalizedAdjacency;
use unionnet::objective::{loss_and_gradients, Objective};
use unionnet::seed::stream_rng;
use unionnet::sparse::CsrMatrix;
use unionnet::unionnet::{AnchorEstimate, LossWeights, PriorDistribution};

fn main() -> unionnet::Result<()> {
    let mut rng = stream_rng(5, 0);
    let n = 12;
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).chain([(0, 6), (3, 9)]).collect();
    let adj = NormalizedAdjacency::from_edges(n, &edges)?;
    let x = CsrMatrix::from_dense(&Array2::from_shape_simple_fn((n, 4), || rng.gen_range(-1.0..1.0)));
    let params = GcnParams::glorot(4, 6, 3, &mut rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    let train: Vec<usize> = (0..n).step_by(2).collect();

    let estimates: Vec<AnchorEstimate> = train
        .iter()
        .map(|&a| AnchorEstimate {
            anchor: a,
            given: labels[a],
            reweight: rng.gen_range(0.0..1.0),
            corrected: rng.gen_range(0..3),
            confidence: rng.gen_range(0.3..1.0),
            degenerate: false,
        })
        .collect();
    let prior = PriorDistribution::from_labels(&labels, &train, 3)?;

    let objectives = [
        ("cross entropy", Objective::CrossEntropy),
        ("gce q=0.7", Objective::Gce { q: 0.7 }),
        (
            "full",
            Objective::Robust {
                estimates: &estimates,
                prior: &prior,
                weights: LossWeights::new(0.5, 1.0)?,
            },
        ),
    ];

    let h = 1e-5;
    for (name, objective) in objectives {
        let loss = |p: &GcnParams| {
            loss_and_gradients(&adj, &x, p, None, &labels, &train, objective)
                .0
                .total
        };
        let (_, grads) = loss_and_gradients(&adj, &x, &params, None, &labels, &train, objective);
        let mut worst: f64 = 0.0;
        for which in 0..2 {
            let shape = if which == 0 { params.w0.dim() } else { params.w1.dim() };
            for idx in ndarray::indices(shape) {
                let mut plus = params.clone();
                let mut minus = params.clone();
                let (wp, wm, g) = if which == 0 {
                    (&mut plus.w0, &mut minus.w0, &grads.w0)
                } else {
                    (&mut plus.w1, &mut minus.w1, &grads.w1)
                };
                wp[idx] += h;
                wm[idx] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let rel = (g[idx] - numeric).abs() / g[idx].abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        println!("{name:<14} max relative error {worst:.2e}");
    }
    Ok(())
}
