//! Training objectives assembled on the differentiation tape.

use crate::gcn::tape::{Pick, Tape};
use crate::gcn::{record_forward, unit_picks, DropoutMasks, GcnParams};
use crate::graph::NormalizedAdjacency;
use crate::sparse::CsrMatrix;
use crate::unionnet::{AnchorEstimate, LossWeights, PriorDistribution};

#[derive(Debug, Clone, Copy)]
pub enum Objective<'t> {
    /// Plain cross entropy on the given labels.
    CrossEntropy,
    /// Generalised cross entropy with exponent `q`.
    Gce { q: f64 },
    /// `w_r · J_r + w_c · J_c + w_p · J_p`.
    Robust {
        estimates: &'t [AnchorEstimate],
        prior: &'t PriorDistribution,
        weights: LossWeights,
    },
}

/// Loss components of one evaluation. Terms an objective does not use are 0;
/// for cross entropy `reweight` holds the CE value itself.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValues {
    pub reweight: f64,
    pub correction: f64,
    pub prior: f64,
    pub total: f64,
}

/// Loss and its parameter gradient (weight decay excluded).
///
/// `masks = None` evaluates without dropout.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradients(
    adj: &NormalizedAdjacency,
    features: &CsrMatrix,
    params: &GcnParams,
    masks: Option<DropoutMasks>,
    labels: &[usize],
    train_nodes: &[usize],
    objective: Objective<'_>,
) -> (LossValues, GcnParams) {
    let mut tape = Tape::new();
    let vars = record_forward(&mut tape, adj, features, params, masks);
    let probs = vars.probs;

    let (values, total) = match objective {
        Objective::CrossEntropy => {
            let ce = tape.weighted_nll(probs, unit_picks(labels, train_nodes));
            let v = tape.scalar(ce);
            (
                LossValues {
                    reweight: v,
                    total: v,
                    ..Default::default()
                },
                ce,
            )
        }
        Objective::Gce { q } => {
            let loss = tape.gce(probs, unit_picks(labels, train_nodes), q);
            let v = tape.scalar(loss);
            (
                LossValues {
                    total: v,
                    ..Default::default()
                },
                loss,
            )
        }
        Objective::Robust {
            estimates,
            prior,
            weights,
        } => {
            let given = estimates
                .iter()
                .map(|e| Pick {
                    row: e.anchor,
                    class: e.given,
                    weight: e.reweight,
                })
                .collect();
            let corrected = estimates
                .iter()
                .map(|e| Pick {
                    row: e.anchor,
                    class: e.corrected,
                    weight: e.confidence,
                })
                .collect();
            let jr = tape.weighted_nll(probs, given);
            let jc = tape.weighted_nll(probs, corrected);
            let jp = tape.prior_kl(probs, train_nodes.to_vec(), prior.probs().to_vec());
            let total = tape.linear(vec![
                (jr, weights.reweight),
                (jc, weights.correction),
                (jp, weights.prior),
            ]);
            (
                LossValues {
                    reweight: tape.scalar(jr),
                    correction: tape.scalar(jc),
                    prior: tape.scalar(jp),
                    total: tape.scalar(total),
                },
                total,
            )
        }
    };

    let grads = tape.backward(total);
    let grads = GcnParams {
        w0: grads.wrt(&tape, vars.w0),
        w1: grads.wrt(&tape, vars.w1),
    };
    (values, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::{forward_eval, standard_ce_loss};
    use crate::seed::stream_rng;
    use crate::unionnet::{combined_loss, correction_loss, prior_kl_loss, reweighted_loss};
    use ndarray::Array2;
    use rand::Rng;

    fn instance() -> (NormalizedAdjacency, CsrMatrix, GcnParams, Vec<usize>) {
        let mut rng = stream_rng(21, 0);
        let n = 8;
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).chain([(0, 4), (2, 6)]).collect();
        let adj = NormalizedAdjacency::from_edges(n, &edges).unwrap();
        let x = CsrMatrix::from_dense(&Array2::from_shape_simple_fn((n, 3), || rng.gen_range(-1.0..1.0)));
        let params = GcnParams::glorot(3, 5, 3, &mut rng);
        let labels = (0..n).map(|i| i % 3).collect();
        (adj, x, params, labels)
    }

    #[test]
    fn tape_values_match_standalone_losses() {
        let (adj, x, params, labels) = instance();
        let train = vec![0, 1, 2, 5];
        let probs = forward_eval(&adj, &x, &params).unwrap().probs;

        let (ce, _) = loss_and_gradients(&adj, &x, &params, None, &labels, &train, Objective::CrossEntropy);
        assert_eq!(ce.total, standard_ce_loss(&probs, &labels, &train).unwrap());

        let estimates: Vec<AnchorEstimate> = train
            .iter()
            .enumerate()
            .map(|(k, &a)| AnchorEstimate {
                anchor: a,
                given: labels[a],
                reweight: 0.2 + 0.2 * k as f64,
                corrected: (labels[a] + k) % 3,
                confidence: 0.9 - 0.1 * k as f64,
                degenerate: false,
            })
            .collect();
        let prior = PriorDistribution::from_labels(&labels, &train, 3).unwrap();
        let weights = LossWeights::new(0.5, 1.0).unwrap();
        let (v, _) = loss_and_gradients(
            &adj,
            &x,
            &params,
            None,
            &labels,
            &train,
            Objective::Robust {
                estimates: &estimates,
                prior: &prior,
                weights,
            },
        );
        let anchors: Vec<usize> = estimates.iter().map(|e| e.anchor).collect();
        let given: Vec<usize> = estimates.iter().map(|e| e.given).collect();
        let pr: Vec<f64> = estimates.iter().map(|e| e.reweight).collect();
        let yc: Vec<usize> = estimates.iter().map(|e| e.corrected).collect();
        let pc: Vec<f64> = estimates.iter().map(|e| e.confidence).collect();
        let jr = reweighted_loss(&probs, &anchors, &given, &pr);
        let jc = correction_loss(&probs, &anchors, &yc, &pc);
        let jp = prior_kl_loss(&probs, &train, &prior).unwrap();
        assert_eq!((v.reweight, v.correction, v.prior), (jr, jc, jp));
        assert!((v.total - combined_loss(jr, jc, jp, 0.5, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let (adj, x, params, labels) = instance();
        let estimates = vec![AnchorEstimate {
            anchor: 1,
            given: 1,
            reweight: 0.0,
            corrected: 0,
            confidence: 0.0,
            degenerate: false,
        }];
        let prior = PriorDistribution::from_labels(&labels, &[1], 3).unwrap();
        let (v, g) = loss_and_gradients(
            &adj,
            &x,
            &params,
            None,
            &labels,
            &[1],
            Objective::Robust {
                estimates: &estimates,
                prior: &prior,
                weights: LossWeights::reweight_only(),
            },
        );
        assert_eq!(v.total, 0.0);
        assert!(g.w0.iter().chain(g.w1.iter()).all(|&x| x == 0.0));
    }
}
