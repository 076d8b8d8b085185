//! Two-layer GCN backbone: parameters, forward pass, gradients and Adam.
//!
//! ```text
//! H1     = relu(Â · dropout(X) · W0)
//! logits = Â · dropout(H1) · W1
//! probs  = softmax(logits)
//! ```
//!
//! No bias terms are used. Dropout is inverted (kept entries scaled by
//! `1 / (1 - p)`) and disabled in eval mode.

mod adam;
pub mod tape;

use std::borrow::Cow;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
use tape::{Pick, Tape, Var};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::sparse::CsrMatrix;

/// Optimiser and backbone hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: 16,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.weight_decay < 0.0 || self.hidden == 0 {
            return Err(Error::Config("weight_decay must be >= 0 and hidden >= 1".into()));
        }
        Ok(())
    }
}

/// GCN weights. Also used as the container for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..limit))
}

impl GcnParams {
    /// Glorot-uniform initialisation.
    pub fn glorot<R: Rng + ?Sized>(features: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let w0 = glorot(features, hidden, rng);
        let w1 = glorot(hidden, classes, rng);
        Self { w0, w1 }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w0: Array2::zeros(self.w0.dim()),
            w1: Array2::zeros(self.w1.dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w0.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.iter().chain(self.w1.iter()).all(|v| v.is_finite())
    }

    /// Gradient of `λ/2 · (‖W0‖² + ‖W1‖²)`, i.e. `λ · W`.
    pub fn weight_decay_grad(&self, lambda: f64) -> Self {
        Self {
            w0: &self.w0 * lambda,
            w1: &self.w1 * lambda,
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.w0 += &other.w0;
        self.w1 += &other.w1;
    }

    /// Text checkpoint: a `gcn-params v1` header, then per matrix a
    /// `name rows cols` line followed by one tab-separated line per row.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "gcn-params v1")?;
        for (name, m) in [("w0", &self.w0), ("w1", &self.w1)] {
            writeln!(out, "{name} {} {}", m.nrows(), m.ncols())?;
            for row in m.rows() {
                let mut line = String::new();
                for (k, v) in row.iter().enumerate() {
                    if k > 0 {
                        line.push('\t');
                    }
                    write!(line, "{v}").unwrap();
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| bad("unexpected end of checkpoint".into()))
        };
        if next()?.trim() != "gcn-params v1" {
            return Err(bad("missing `gcn-params v1` header".into()));
        }
        let mut read_matrix = |expected: &str| -> Result<Array2<f64>> {
            let header = next()?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != expected {
                return Err(bad(format!("expected `{expected} rows cols`, got `{header}`")));
            }
            let dim = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
            let (rows, cols) = (dim(parts[1])?, dim(parts[2])?);
            let mut m = Array2::zeros((rows, cols));
            for r in 0..rows {
                let line = next()?;
                let values: Vec<&str> = line.split('\t').collect();
                if values.len() != cols {
                    return Err(bad(format!(
                        "{expected} row {r}: {} columns, expected {cols}",
                        values.len()
                    )));
                }
                for (c, v) in values.iter().enumerate() {
                    m[[r, c]] = v.parse().map_err(|e| bad(format!("{expected}[{r},{c}] `{v}`: {e}")))?;
                }
            }
            Ok(m)
        };
        let w0 = read_matrix("w0")?;
        let w1 = read_matrix("w1")?;
        if w0.ncols() != w1.nrows() {
            return Err(bad("hidden dimensions of w0 and w1 differ".into()));
        }
        Ok(Self { w0, w1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { dropout: f64 },
    Eval,
}

/// Inverted-dropout masks for the input features and the hidden layer.
/// Entries are `0` or `1 / (1 - p)`. The input mask covers the stored
/// entries of the sparse feature matrix only; dropping a zero is a no-op.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub input: Vec<f64>,
    pub hidden: Array2<f64>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(features: &CsrMatrix, hidden: usize, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut draw = || if rng.gen::<f64>() < p { 0.0 } else { keep };
        let input = (0..features.nnz()).map(|_| draw()).collect();
        let hidden = Array2::from_shape_simple_fn((features.nrows(), hidden), draw);
        Self { input, hidden }
    }
}

/// Tape handles produced by [`record_forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub w0: Var,
    pub w1: Var,
    pub hidden: Var,
    pub logits: Var,
    pub probs: Var,
}

/// Records the forward pass on `tape`. `masks = None` is eval mode.
pub fn record_forward<'a>(
    tape: &mut Tape<'a>,
    adj: &'a NormalizedAdjacency,
    features: &'a CsrMatrix,
    params: &GcnParams,
    masks: Option<DropoutMasks>,
) -> ForwardVars {
    assert_eq!(features.ncols(), params.w0.nrows(), "feature dim does not match W0");
    assert_eq!(features.nrows(), adj.dim(), "feature rows do not match adjacency");
    let w0 = tape.param(params.w0.clone());
    let w1 = tape.param(params.w1.clone());
    let (x, hidden_mask) = match masks {
        Some(m) => (Cow::Owned(features.scale_entries(&m.input)), Some(m.hidden)),
        None => (Cow::Borrowed(features), None),
    };
    let xw = tape.sparse_matmul(x, w0);
    let pre = tape.spmm(adj, xw);
    let hidden = tape.relu(pre);
    let mut h = hidden;
    if let Some(mask) = hidden_mask {
        h = tape.mul_const(h, mask);
    }
    let hw = tape.matmul(h, w1);
    let logits = tape.spmm(adj, hw);
    let probs = tape.softmax(logits);
    ForwardVars {
        w0,
        w1,
        hidden,
        logits,
        probs,
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    /// Post-ReLU hidden layer, `n × h`.
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    pub masks: Option<DropoutMasks>,
}

impl ForwardState {
    /// Node representations used for label aggregation (the hidden layer).
    pub fn embeddings(&self) -> &Array2<f64> {
        &self.hidden
    }

    /// Arg-max class per node, ties to the lowest index.
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.probs)
    }
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn forward<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    features: &CsrMatrix,
    params: &GcnParams,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardState> {
    if features.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input features"));
    }
    let masks = match mode {
        Mode::Eval => None,
        Mode::Train { dropout } => Some(DropoutMasks::sample(features, params.hidden(), dropout, rng)),
    };
    let mut tape = Tape::new();
    let vars = record_forward(&mut tape, adj, features, params, masks.clone());
    Ok(ForwardState {
        hidden: tape.value(vars.hidden).clone(),
        logits: tape.value(vars.logits).clone(),
        probs: tape.value(vars.probs).clone(),
        masks,
    })
}

/// Eval-mode forward pass; needs no randomness.
pub fn forward_eval(adj: &NormalizedAdjacency, features: &CsrMatrix, params: &GcnParams) -> Result<ForwardState> {
    forward(
        adj,
        features,
        params,
        Mode::Eval,
        &mut rand::rngs::mock::StepRng::new(0, 0),
    )
}

/// `-Σ_{i∈nodes} ln probs[i][labels[i]]`, summed over the labelled nodes.
pub fn standard_ce_loss(probs: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyMask("training nodes for cross entropy"));
    }
    Ok(tape::weighted_nll_value(probs, &unit_picks(labels, nodes)))
}

/// Generalised cross entropy `Σ (1 - p^q) / q` over the labelled nodes.
pub fn gce_loss(probs: &Array2<f64>, labels: &[usize], nodes: &[usize], q: f64) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyMask("training nodes for GCE"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("GCE exponent must lie in (0, 1], got {q}")));
    }
    Ok(tape::gce_value(probs, &unit_picks(labels, nodes), q))
}

pub(crate) fn unit_picks(labels: &[usize], nodes: &[usize]) -> Vec<Pick> {
    nodes
        .iter()
        .map(|&row| Pick {
            row,
            class: labels[row],
            weight: 1.0,
        })
        .collect()
}
