//! Label aggregation over random-walk support sets, and the reweighting,
//! correction and prior losses built from it.
//!
//! For an anchor `a` (a labelled training node) with support set `S`, the
//! aggregated class distribution is
//!
//! ```text
//! P(y | a, S) = Σ_{i∈S} softmax_i(⟨h_i, h_a⟩) · onehot(y_i)
//! ```
//!
//! where `y_i` is the given label for labelled members and the model's
//! arg-max prediction otherwise. From `P` the anchor receives a reweighting
//! score `p_r = P[ỹ_a]`, a corrected label `y_c = argmax P` and a confidence
//! `p_c = max P`. All three are treated as constants by the optimiser.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gcn::tape::{self, Pick};
use crate::graph::{collect_context, Graph, Split, WalkConfig};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Given,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportMember {
    pub node: usize,
    pub label: usize,
    pub source: LabelSource,
}

/// Context nodes of one anchor with their effective labels, in visit order.
/// Duplicates are kept: visit frequency acts as a proximity weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub anchor: usize,
    /// The anchor's given (possibly noisy) label.
    pub anchor_label: usize,
    pub members: Vec<SupportMember>,
}

impl SupportSet {
    /// True when no context could be collected (isolated anchor).
    pub fn is_degenerate(&self) -> bool {
        self.members.is_empty()
    }
}

/// Builds the support set of `anchor` from fresh random walks.
///
/// Training nodes contribute their given label, every other node the
/// current prediction. If the walks return nothing, the anchor's direct
/// neighbours are used; an anchor without neighbours yields a degenerate set.
pub fn build_support_set<R: Rng + ?Sized>(
    graph: &Graph,
    anchor: usize,
    walk: &WalkConfig,
    labels: &[usize],
    predictions: &[usize],
    rng: &mut R,
) -> SupportSet {
    assert_eq!(
        graph.split()[anchor],
        Split::Train,
        "anchor {anchor} is not a training node"
    );
    let mut context = collect_context(graph, anchor, walk, rng);
    if context.is_empty() {
        context = graph.neighbors(anchor).to_vec();
    }
    let members = context
        .into_iter()
        .map(|node| {
            if graph.split()[node] == Split::Train {
                SupportMember {
                    node,
                    label: labels[node],
                    source: LabelSource::Given,
                }
            } else {
                SupportMember {
                    node,
                    label: predictions[node],
                    source: LabelSource::Predicted,
                }
            }
        })
        .collect();
    SupportSet {
        anchor,
        anchor_label: labels[anchor],
        members,
    }
}

/// Attention weights of the members: softmax of inner products with the
/// anchor embedding.
pub fn attention_weights(embeddings: &Array2<f64>, support: &SupportSet) -> Vec<f64> {
    let anchor = embeddings.row(support.anchor);
    let scores: Vec<f64> = support
        .members
        .iter()
        .map(|m| embeddings.row(m.node).dot(&anchor))
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    /// `P(y | anchor, S)`.
    pub distribution: Vec<f64>,
    /// `p_r`: mass of the anchor's given label.
    pub reweight: f64,
    /// `y_c`: arg-max of the distribution, lowest index on ties.
    pub corrected_label: usize,
    /// `p_c`: the maximum probability.
    pub confidence: f64,
}

pub fn aggregate(embeddings: &Array2<f64>, support: &SupportSet, num_classes: usize) -> Result<AggregationResult> {
    if support.is_degenerate() {
        return Err(Error::DegenerateSupport(support.anchor));
    }
    let weights = attention_weights(embeddings, support);
    let mut distribution = vec![0.0; num_classes];
    for (member, w) in support.members.iter().zip(weights) {
        distribution[member.label] += w;
    }
    let mut corrected_label = 0;
    for (j, &p) in distribution.iter().enumerate() {
        if p > distribution[corrected_label] {
            corrected_label = j;
        }
    }
    Ok(AggregationResult {
        reweight: distribution[support.anchor_label],
        confidence: distribution[corrected_label],
        corrected_label,
        distribution,
    })
}

/// Per-anchor constants entering the reweighting and correction losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorEstimate {
    pub anchor: usize,
    pub given: usize,
    pub reweight: f64,
    pub corrected: usize,
    pub confidence: f64,
    pub degenerate: bool,
}

impl AnchorEstimate {
    pub fn from_aggregation(support: &SupportSet, result: &AggregationResult) -> Self {
        Self {
            anchor: support.anchor,
            given: support.anchor_label,
            reweight: result.reweight,
            corrected: result.corrected_label,
            confidence: result.confidence,
            degenerate: false,
        }
    }

    /// Degenerate anchors keep plain cross entropy: `p_r = 1`, `y_c = ỹ`, `p_c = 0`.
    pub fn fallback(anchor: usize, given: usize) -> Self {
        Self {
            anchor,
            given,
            reweight: 1.0,
            corrected: given,
            confidence: 0.0,
            degenerate: true,
        }
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add((epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Builds support sets and aggregates labels for every training node.
///
/// Walks are drawn from a substream keyed by `(walk.seed, epoch, anchor)`,
/// so the result is independent of thread scheduling. Output is in
/// ascending anchor order.
pub fn estimate_anchors(
    graph: &Graph,
    embeddings: &Array2<f64>,
    labels: &[usize],
    predictions: &[usize],
    walk: &WalkConfig,
    epoch: usize,
) -> Vec<AnchorEstimate> {
    let seed = epoch_seed(walk.seed, epoch);
    graph
        .nodes_in(Split::Train)
        .into_par_iter()
        .map(|anchor| {
            let mut rng = stream_rng(seed, anchor as u64);
            let support = build_support_set(graph, anchor, walk, labels, predictions, &mut rng);
            match aggregate(embeddings, &support, graph.num_classes()) {
                Ok(result) => AnchorEstimate::from_aggregation(&support, &result),
                Err(_) => AnchorEstimate::fallback(anchor, labels[anchor]),
            }
        })
        .collect()
}

/// Writes `anchor<TAB>p_r<TAB>p_c<TAB>y_given<TAB>y_corrected` lines.
pub fn write_diagnostics<W: Write>(estimates: &[AnchorEstimate], mut out: W) -> std::io::Result<()> {
    for e in estimates {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.anchor, e.reweight, e.confidence, e.given, e.corrected
        )?;
    }
    Ok(())
}

/// Class frequencies of the given labels over the training nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDistribution(Vec<f64>);

impl PriorDistribution {
    pub fn from_labels(labels: &[usize], nodes: &[usize], num_classes: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyMask("training nodes for the class prior"));
        }
        let mut p = vec![0.0; num_classes];
        for &v in nodes {
            p[labels[v]] += 1.0;
        }
        let total = nodes.len() as f64;
        p.iter_mut().for_each(|v| *v /= total);
        Ok(Self(p))
    }

    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior must be a probability vector, got {p:?}")));
        }
        Ok(Self(p))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

fn picks(anchors: &[usize], classes: &[usize], weights: &[f64]) -> Vec<Pick> {
    assert!(anchors.len() == classes.len() && anchors.len() == weights.len());
    anchors
        .iter()
        .zip(classes)
        .zip(weights)
        .map(|((&row, &class), &weight)| Pick { row, class, weight })
        .collect()
}

/// `J_r = -Σ p_r(a) · ln probs[a][ỹ_a]`.
pub fn reweighted_loss(probs: &Array2<f64>, anchors: &[usize], given: &[usize], reweight: &[f64]) -> f64 {
    tape::weighted_nll_value(probs, &picks(anchors, given, reweight))
}

/// `J_c = -Σ p_c(a) · ln probs[a][y_c(a)]`.
pub fn correction_loss(probs: &Array2<f64>, anchors: &[usize], corrected: &[usize], confidence: &[f64]) -> f64 {
    tape::weighted_nll_value(probs, &picks(anchors, corrected, confidence))
}

/// `J_p = Σ_j p_j ln(p_j / f̄_j)` with `f̄` the mean prediction over `nodes`.
pub fn prior_kl_loss(probs: &Array2<f64>, nodes: &[usize], prior: &PriorDistribution) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyMask("training nodes for the prior loss"));
    }
    Ok(tape::prior_kl_value(probs, nodes, prior.probs()))
}

/// `(1 - α) J_r + α J_c + β J_p`.
pub fn combined_loss(jr: f64, jc: f64, jp: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 - alpha) * jr + alpha * jc + beta * jp
}

/// Coefficients of `J_r`, `J_c` and `J_p` in the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub reweight: f64,
    pub correction: f64,
    pub prior: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(Self {
            reweight: 1.0 - alpha,
            correction: alpha,
            prior: beta,
        })
    }

    pub fn reweight_only() -> Self {
        Self {
            reweight: 1.0,
            correction: 0.0,
            prior: 0.0,
        }
    }
}
