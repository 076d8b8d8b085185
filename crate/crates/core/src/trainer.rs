//! End-to-end training: cross-entropy pretraining followed by the robust
//! objective, plus the plain-GCN, GCE and ablation variants.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{adam_step, forward_eval, AdamState, DropoutMasks, ForwardState, GcnParams, TrainHyper};
use crate::graph::{normalize_adjacency, Graph, Split, WalkConfig};
use crate::objective::{loss_and_gradients, LossValues, Objective};
use crate::seed::{stream_rng, Seeds};
use crate::unionnet::{estimate_anchors, write_diagnostics, LossWeights, PriorDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain GCN with cross entropy throughout.
    GcnCe,
    /// Full objective `(1-α) J_r + α J_c + β J_p`.
    Unionnet,
    /// Reweighting only, `J_r`.
    UnionnetR,
    /// Reweighting and correction, `(1-α) J_r + α J_c`.
    UnionnetRc,
    /// Generalised cross entropy baseline.
    Gce,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::GcnCe,
        Method::Unionnet,
        Method::UnionnetR,
        Method::UnionnetRc,
        Method::Gce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::GcnCe => "gcn_ce",
            Method::Unionnet => "unionnet",
            Method::UnionnetR => "unionnet_r",
            Method::UnionnetRc => "unionnet_rc",
            Method::Gce => "gce",
        }
    }

    fn uses_support_sets(self) -> bool {
        matches!(self, Method::Unionnet | Method::UnionnetR | Method::UnionnetRc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
    pub walk: WalkConfig,
    pub hyper: TrainHyper,
    /// Epochs of plain cross entropy before the robust terms switch on.
    pub pretrain_epochs: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation score.
    /// Only epochs after pretraining count.
    pub patience: Option<usize>,
    pub gce_q: f64,
    /// Seed for weight initialisation and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Unionnet,
            alpha: 0.5,
            beta: 1.0,
            walk: WalkConfig::default(),
            hyper: TrainHyper::default(),
            pretrain_epochs: 40,
            epochs: 400,
            patience: Some(100),
            gce_q: 0.7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Sets the init and walk seeds from one master seed.
    pub fn with_master_seed(mut self, master: u64) -> Self {
        let seeds = Seeds::from_master(master);
        self.seed = seeds.init;
        self.walk.seed = seeds.walks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.walk.validate()?;
        LossWeights::new(self.alpha, self.beta)?;
        if self.epochs == 0 || self.pretrain_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "need 0 <= pretrain_epochs < epochs (got {} and {})",
                self.pretrain_epochs, self.epochs
            )));
        }
        if self.method == Method::Gce && !(self.gce_q > 0.0 && self.gce_q <= 1.0) {
            return Err(Error::Config(format!("gce_q must lie in (0, 1], got {}", self.gce_q)));
        }
        Ok(())
    }

    /// Coefficients of `(J_r, J_c, J_p)` for the robust methods.
    pub fn loss_weights(&self) -> Result<LossWeights> {
        let full = LossWeights::new(self.alpha, self.beta)?;
        Ok(match self.method {
            Method::UnionnetR => LossWeights::reweight_only(),
            Method::UnionnetRc => LossWeights { prior: 0.0, ..full },
            _ => full,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub losses: LossValues,
    /// Micro-F1 against the clean labels, after this epoch's update.
    pub train_f1: f64,
    pub val_f1: f64,
    pub test_f1: f64,
}

pub const LOG_HEADER: &str = "epoch,loss_jr,loss_jc,loss_jp,loss_total,train_f1,val_f1,test_f1";

pub fn write_log_csv<W: Write>(log: &[EpochLog], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for e in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch,
            e.losses.reweight,
            e.losses.correction,
            e.losses.prior,
            e.losses.total,
            e.train_f1,
            e.val_f1,
            e.test_f1
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Parameters at the epoch with the highest validation micro-F1.
    pub params: GcnParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub val_f1: f64,
    pub test_f1: f64,
    pub seed: u64,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn log_csv(&self) -> String {
        let mut buf = Vec::new();
        write_log_csv(&self.log, &mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Micro-averaged F1 of `predictions` over `nodes`. For single-label
/// multiclass prediction every error is one false positive and one false
/// negative, so this equals accuracy.
pub fn micro_f1(predictions: &[usize], truth: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyMask("evaluation nodes"));
    }
    let tp = nodes.iter().filter(|&&v| predictions[v] == truth[v]).count() as f64;
    let errors = nodes.len() as f64 - tp;
    let (fp, fn_) = (errors, errors);
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}

/// Micro-F1 of `params` on the nodes of `split`, against clean labels.
pub fn evaluate(params: &GcnParams, graph: &Graph, split: Split) -> Result<f64> {
    let adj = normalize_adjacency(graph);
    let state = forward_eval(&adj, graph.sparse_features(), params)?;
    micro_f1(&state.predictions(), graph.labels(), &graph.nodes_in(split))
}

pub fn train(graph: &Graph, labels: &[usize], cfg: &TrainConfig) -> Result<RunResult> {
    train_with_diagnostics(graph, labels, cfg, None)
}

/// [`train`], additionally writing per-epoch anchor estimates as
/// `epoch_NNNN.tsv` into `diagnostics` when given.
pub fn train_with_diagnostics(
    graph: &Graph,
    labels: &[usize],
    cfg: &TrainConfig,
    diagnostics: Option<&Path>,
) -> Result<RunResult> {
    cfg.validate()?;
    if labels.len() != graph.num_nodes() {
        return Err(Error::Config(format!(
            "{} labels for {} nodes",
            labels.len(),
            graph.num_nodes()
        )));
    }
    let started = Instant::now();
    let train_nodes = graph.nodes_in(Split::Train);
    let val_nodes = graph.nodes_in(Split::Val);
    let test_nodes = graph.nodes_in(Split::Test);
    if train_nodes.is_empty() {
        return Err(Error::EmptyMask("training nodes"));
    }
    if val_nodes.is_empty() || test_nodes.is_empty() {
        return Err(Error::EmptyMask("validation or test nodes"));
    }
    if let Some(dir) = diagnostics {
        std::fs::create_dir_all(dir)?;
    }

    let adj = normalize_adjacency(graph);
    let features = graph.sparse_features();
    let prior = PriorDistribution::from_labels(labels, &train_nodes, graph.num_classes())?;
    let weights = cfg.loss_weights()?;
    let hyper = cfg.hyper;

    let mut params = GcnParams::glorot(
        graph.feature_dim(),
        hyper.hidden,
        graph.num_classes(),
        &mut stream_rng(cfg.seed, 0),
    );
    let mut dropout_rng = stream_rng(cfg.seed, 1);
    let mut adam = AdamState::new(&params);

    let mut eval: ForwardState = forward_eval(&adj, features, &params)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, f64, GcnParams)> = None;

    for epoch in 0..cfg.epochs {
        let robust_phase = cfg.method.uses_support_sets() && epoch >= cfg.pretrain_epochs;
        let estimates;
        let objective = if robust_phase {
            estimates = estimate_anchors(graph, eval.embeddings(), labels, &eval.predictions(), &cfg.walk, epoch);
            if let Some(dir) = diagnostics {
                let file = std::fs::File::create(dir.join(format!("epoch_{epoch:04}.tsv")))?;
                write_diagnostics(&estimates, std::io::BufWriter::new(file))?;
            }
            Objective::Robust {
                estimates: &estimates,
                prior: &prior,
                weights,
            }
        } else if cfg.method == Method::Gce {
            Objective::Gce { q: cfg.gce_q }
        } else {
            Objective::CrossEntropy
        };

        let masks = DropoutMasks::sample(features, hyper.hidden, hyper.dropout, &mut dropout_rng);
        let (losses, mut grads) =
            loss_and_gradients(&adj, features, &params, Some(masks), labels, &train_nodes, objective);
        if !losses.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: losses.total,
            });
        }
        grads.add_assign(&params.weight_decay_grad(hyper.weight_decay));
        adam_step(&mut params, &grads, &hyper, &mut adam);
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: losses.total,
            });
        }

        eval = forward_eval(&adj, features, &params)?;
        let predictions = eval.predictions();
        let truth = graph.labels();
        let entry = EpochLog {
            epoch,
            losses,
            train_f1: micro_f1(&predictions, truth, &train_nodes)?,
            val_f1: micro_f1(&predictions, truth, &val_nodes)?,
            test_f1: micro_f1(&predictions, truth, &test_nodes)?,
        };
        log.push(entry);
        log::debug!(
            "epoch {epoch}: loss {:.4} val {:.4} test {:.4}",
            losses.total,
            entry.val_f1,
            entry.test_f1
        );

        if best.as_ref().is_none_or(|b| entry.val_f1 > b.1) {
            best = Some((epoch, entry.val_f1, entry.test_f1, params.clone()));
        }
        if let (Some(patience), Some((best_epoch, ..))) = (cfg.patience, &best) {
            let since = epoch.saturating_sub((*best_epoch).max(cfg.pretrain_epochs.saturating_sub(1)));
            if epoch >= cfg.pretrain_epochs && since >= patience {
                break;
            }
        }
    }

    let (best_epoch, val_f1, test_f1, best_params) = best.expect("at least one epoch runs");
    Ok(RunResult {
        params: best_params,
        log,
        best_epoch,
        val_f1,
        test_f1,
        seed: cfg.seed,
        wall_time: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_sbm, SbmSpec};
    use crate::noise::{build_transition, corrupt_labels, NoiseType};

    fn small_graph() -> Graph {
        generate_sbm(&SbmSpec {
            nodes_per_block: 40,
            val_size: 40,
            test_size: 60,
            ..SbmSpec::fixture(1)
        })
        .unwrap()
    }

    fn noisy(graph: &Graph, rate: f64) -> Vec<usize> {
        let q = build_transition(NoiseType::Symmetric, rate, graph.num_classes()).unwrap();
        corrupt_labels(graph, &q, 5).unwrap().labels
    }

    fn short(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            epochs: 30,
            pretrain_epochs: 10,
            patience: None,
            ..TrainConfig::default()
        }
        .with_master_seed(3)
    }

    #[test]
    fn micro_f1_cases() {
        assert_eq!(micro_f1(&[0, 1, 2], &[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(micro_f1(&[1, 1, 1, 1], &[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(micro_f1(&[0], &[0], &[]).is_err());
    }

    #[test]
    fn micro_f1_matches_confusion_matrix() {
        let truth = [0, 1, 2, 2, 1, 0, 0, 2, 1, 1];
        let pred = [0, 2, 2, 1, 1, 0, 1, 2, 1, 0];
        let nodes: Vec<usize> = (0..10).collect();
        let mut confusion = [[0usize; 3]; 3];
        for v in 0..10 {
            confusion[truth[v]][pred[v]] += 1;
        }
        // Pool per-class TP / FP / FN.
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for c in 0..3 {
            tp += confusion[c][c];
            fp += (0..3).filter(|&r| r != c).map(|r| confusion[r][c]).sum::<usize>();
            fn_ += (0..3).filter(|&p| p != c).map(|p| confusion[c][p]).sum::<usize>();
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        let oracle = 2.0 * precision * recall / (precision + recall);
        assert!((micro_f1(&pred, &truth, &nodes).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            pretrain_epochs: 400,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            alpha: 1.1,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            beta: -0.5,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        let mut bad_walk = TrainConfig::default();
        bad_walk.walk.walk_length = 0;
        assert!(bad_walk.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let g = small_graph();
        let labels = noisy(&g, 0.4);
        let a = train(&g, &labels, &short(Method::Unionnet)).unwrap();
        let b = train(&g, &labels, &short(Method::Unionnet)).unwrap();
        assert_eq!(a.log_csv(), b.log_csv());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn pretraining_is_plain_cross_entropy() {
        let g = small_graph();
        let labels = noisy(&g, 0.4);
        let ce = train(&g, &labels, &short(Method::GcnCe)).unwrap();
        let robust = train(&g, &labels, &short(Method::Unionnet)).unwrap();
        assert_eq!(ce.log[..10], robust.log[..10]);
        assert_ne!(ce.log[10], robust.log[10]);
        for e in &robust.log[..10] {
            assert_eq!((e.losses.correction, e.losses.prior), (0.0, 0.0));
            assert_eq!(e.losses.reweight, e.losses.total);
        }
    }

    #[test]
    fn zero_alpha_beta_matches_reweight_only() {
        let g = small_graph();
        let labels = noisy(&g, 0.4);
        let full = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            ..short(Method::Unionnet)
        };
        let a = train(&g, &labels, &full).unwrap();
        let b = train(&g, &labels, &short(Method::UnionnetR)).unwrap();
        assert_eq!(a.log.len(), b.log.len());
        for (x, y) in a.log.iter().zip(&b.log) {
            assert!((x.losses.total - y.losses.total).abs() <= 1e-9);
        }
    }

    #[test]
    fn reweighted_loss_bounded_by_cross_entropy() {
        let g = small_graph();
        let labels = noisy(&g, 0.4);
        let run = train(&g, &labels, &short(Method::UnionnetR)).unwrap();
        // J_r at each robust epoch never exceeds the unweighted CE of the same forward pass.
        for e in &run.log[10..] {
            assert!(e.losses.total <= e.losses.reweight + 1e-12);
            assert!(e.losses.correction >= 0.0);
        }
        let adj = normalize_adjacency(&g);
        let probs = forward_eval(&adj, g.sparse_features(), &run.params).unwrap().probs;
        let train_nodes = g.nodes_in(Split::Train);
        let ce = crate::gcn::standard_ce_loss(&probs, &labels, &train_nodes).unwrap();
        let est = estimate_anchors(
            &g,
            &forward_eval(&adj, g.sparse_features(), &run.params).unwrap().hidden,
            &labels,
            &crate::gcn::argmax_rows(&probs),
            &WalkConfig::default(),
            0,
        );
        let anchors: Vec<usize> = est.iter().map(|e| e.anchor).collect();
        let given: Vec<usize> = est.iter().map(|e| e.given).collect();
        let pr: Vec<f64> = est.iter().map(|e| e.reweight).collect();
        assert!(crate::unionnet::reweighted_loss(&probs, &anchors, &given, &pr) <= ce);
    }

    #[test]
    fn gce_and_ablations_train() {
        let g = small_graph();
        let labels = noisy(&g, 0.2);
        for m in [Method::Gce, Method::UnionnetRc] {
            let r = train(&g, &labels, &short(m)).unwrap();
            assert_eq!(r.log.len(), 30);
            assert!(r.test_f1 > 0.0);
        }
    }

    #[test]
    fn best_epoch_maximises_validation() {
        let g = small_graph();
        let r = train(&g, g.labels(), &short(Method::GcnCe)).unwrap();
        let max = r.log.iter().map(|e| e.val_f1).fold(0.0, f64::max);
        assert_eq!(r.val_f1, max);
        assert_eq!(r.log[r.best_epoch].test_f1, r.test_f1);
        assert!((evaluate(&r.params, &g, Split::Test).unwrap() - r.test_f1).abs() < 1e-15);
    }

    #[test]
    fn patience_stops_early() {
        let g = small_graph();
        let cfg = TrainConfig {
            patience: Some(5),
            epochs: 400,
            ..short(Method::GcnCe)
        };
        let r = train(&g, g.labels(), &cfg).unwrap();
        assert!(r.log.len() < 400);
        let last = r.log.last().unwrap().epoch;
        assert!(last - r.best_epoch.max(cfg.pretrain_epochs - 1) >= 5);
    }

    #[test]
    fn diagnostics_written_per_robust_epoch() {
        let g = small_graph();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            epochs: 12,
            ..short(Method::Unionnet)
        };
        train_with_diagnostics(&g, g.labels(), &cfg, Some(dir.path())).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 2);
        let body = std::fs::read_to_string(dir.path().join("epoch_0010.tsv")).unwrap();
        assert_eq!(body.lines().count(), g.nodes_in(Split::Train).len());
    }
}
