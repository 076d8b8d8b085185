#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use twofloat::TwoFloat;

use unionnet::gcn::{DropoutMasks, GcnParams};
use unionnet::graph::NormalizedAdjacency;
use unionnet::objective::{loss_and_gradients, Objective};
use unionnet::seed::stream_rng;
use unionnet::sparse::CsrMatrix;
use unionnet::unionnet::{AnchorEstimate, LabelSource, LossWeights, PriorDistribution, SupportMember, SupportSet};

/// Random graph, features, weights, noisy labels and anchor constants.
pub struct Instance {
    pub adj: NormalizedAdjacency,
    pub x: CsrMatrix,
    pub params: GcnParams,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub estimates: Vec<AnchorEstimate>,
    pub prior: PriorDistribution,
    pub masks: DropoutMasks,
}

/// Smallest allowed |pre-activation| in generated instances.
pub const KINK_MARGIN: f64 = 1e-3;

/// 10 to 20 nodes: a ring plus random chords, so every node has context.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = stream_rng(seed, 99);
    let n = rng.gen_range(10..=20);
    let d = rng.gen_range(3..=6);
    let h = rng.gen_range(4..=8);
    let m = rng.gen_range(2..=4);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..n / 2 {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v {
            edges.push((u, v));
        }
    }
    let adj = NormalizedAdjacency::from_edges(n, &edges).unwrap();
    // Roughly a third of the features are exact zeros, exercising the sparse path.
    let dense = Array2::from_shape_simple_fn((n, d), || {
        if rng.gen_bool(0.35) {
            0.0
        } else {
            rng.gen_range(-1.0..1.0)
        }
    });
    let x = CsrMatrix::from_dense(&dense);
    // Central differences are only meaningful away from the ReLU kink, so
    // redraw weights and masks until every pre-activation clears it.
    let (params, masks) = loop {
        let params = GcnParams::glorot(d, h, m, &mut rng);
        let masks = DropoutMasks::sample(&x, h, 0.5, &mut rng);
        let a = adj.to_dense();
        let margin = [x.clone(), x.scale_entries(&masks.input)]
            .iter()
            .map(|xm| {
                a.dot(&xm.to_dense())
                    .dot(&params.w0)
                    .fold(f64::INFINITY, |lo, v| lo.min(v.abs()))
            })
            .fold(f64::INFINITY, f64::min);
        if margin > KINK_MARGIN {
            break (params, masks);
        }
    };
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
    let train: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
    let train = if train.is_empty() { vec![0] } else { train };
    let estimates = train
        .iter()
        .map(|&a| AnchorEstimate {
            anchor: a,
            given: labels[a],
            reweight: rng.gen_range(0.0..1.0),
            corrected: rng.gen_range(0..m),
            confidence: rng.gen_range(1.0 / m as f64..1.0),
            degenerate: false,
        })
        .collect();
    let prior = PriorDistribution::from_labels(&labels, &train, m).unwrap();
    Instance {
        adj,
        x,
        params,
        labels,
        train,
        estimates,
        prior,
        masks,
    }
}

impl Instance {
    pub fn robust(&self, weights: LossWeights) -> Objective<'_> {
        Objective::Robust {
            estimates: &self.estimates,
            prior: &self.prior,
            weights,
        }
    }

    pub fn loss(&self, params: &GcnParams, objective: Objective<'_>, dropout: bool) -> f64 {
        let masks = dropout.then(|| self.masks.clone());
        loss_and_gradients(&self.adj, &self.x, params, masks, &self.labels, &self.train, objective)
            .0
            .total
    }

    /// Largest relative deviation between the tape gradient and central
    /// differences with step `h`, over every weight entry.
    pub fn max_relative_error(&self, objective: Objective<'_>, dropout: bool, h: f64) -> f64 {
        let masks = dropout.then(|| self.masks.clone());
        let (_, grads) = loss_and_gradients(
            &self.adj,
            &self.x,
            &self.params,
            masks,
            &self.labels,
            &self.train,
            objective,
        );
        let mut worst: f64 = 0.0;
        for layer in 0..2 {
            let analytic = if layer == 0 { &grads.w0 } else { &grads.w1 };
            for (idx, &g) in analytic.indexed_iter() {
                let shifted = |delta: f64| {
                    let mut p = self.params.clone();
                    let w = if layer == 0 { &mut p.w0 } else { &mut p.w1 };
                    w[idx] += delta;
                    self.loss(&p, objective, dropout)
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                // Absolute floor for entries whose true gradient is ~0.
                let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }
}

pub fn support(anchor: usize, anchor_label: usize, members: &[(usize, usize)]) -> SupportSet {
    SupportSet {
        anchor,
        anchor_label,
        members: members
            .iter()
            .map(|&(node, label)| SupportMember {
                node,
                label,
                source: LabelSource::Given,
            })
            .collect(),
    }
}

/// Class distribution of a support set computed in double-double arithmetic,
/// with no max shift and explicit normalisation.
pub fn extended_distribution(emb: &Array2<f64>, s: &SupportSet, m: usize) -> Vec<f64> {
    let anchor = emb.row(s.anchor);
    let exps: Vec<TwoFloat> = s
        .members
        .iter()
        .map(|mem| {
            let mut dot = TwoFloat::from(0.0);
            for (a, b) in emb.row(mem.node).iter().zip(anchor.iter()) {
                dot += TwoFloat::new_mul(*a, *b);
            }
            dot.exp()
        })
        .collect();
    let total = exps.iter().fold(TwoFloat::from(0.0), |acc, &e| acc + e);
    let mut p = vec![TwoFloat::from(0.0); m];
    for (mem, e) in s.members.iter().zip(exps) {
        p[mem.label] += e / total;
    }
    p.into_iter().map(f64::from).collect()
}
