//! Minimal reverse-mode differentiation over the fixed set of operations a
//! two-layer GCN and its losses need.
//!
//! Every value is a dense `f64` matrix; scalars are `1 × 1`. Nodes are
//! appended in topological order, so backward is a single reverse sweep.

use std::borrow::Cow;

use ndarray::Array2;

use crate::graph::NormalizedAdjacency;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One `(row, class)` log-probability term with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub row: usize,
    pub class: usize,
    pub weight: f64,
}

enum Op<'a> {
    Input,
    MatMul(Var, Var),
    SpMM(&'a NormalizedAdjacency, Var),
    /// Constant sparse matrix times a dense node.
    SparseLeft(Cow<'a, CsrMatrix>, Var),
    Relu(Var),
    MulConst(Var, Array2<f64>),
    Softmax(Var),
    WeightedNll(Var, Vec<Pick>),
    PriorKl(Var, Vec<usize>, Vec<f64>),
    Gce(Var, Vec<Pick>, f64),
    Linear(Vec<(Var, f64)>),
}

struct Node<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op<'a>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// `-Σ w · ln p[row][class]`.
pub(crate) fn weighted_nll_value(probs: &Array2<f64>, picks: &[Pick]) -> f64 {
    -picks
        .iter()
        .map(|p| p.weight * probs[[p.row, p.class]].ln())
        .sum::<f64>()
}

/// Mean predicted distribution over `rows`.
pub(crate) fn mean_rows(probs: &Array2<f64>, rows: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; probs.ncols()];
    for &r in rows {
        for (acc, &p) in mean.iter_mut().zip(probs.row(r)) {
            *acc += p;
        }
    }
    let scale = 1.0 / rows.len() as f64;
    mean.iter_mut().for_each(|v| *v *= scale);
    mean
}

/// `KL(prior ‖ mean prediction over rows)`, natural log, `0 · ln 0 = 0`.
pub(crate) fn prior_kl_value(probs: &Array2<f64>, rows: &[usize], prior: &[f64]) -> f64 {
    let mean = mean_rows(probs, rows);
    prior
        .iter()
        .zip(&mean)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &f)| p * (p.ln() - f.ln()))
        .sum()
}

/// Generalised cross entropy `Σ (1 - p^q) / q`, weighted.
pub(crate) fn gce_value(probs: &Array2<f64>, picks: &[Pick], q: f64) -> f64 {
    picks
        .iter()
        .map(|p| p.weight * (1.0 - probs[[p.row, p.class]].powf(q)) / q)
        .sum()
}

/// Row-wise softmax with max subtraction.
pub fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Cow<'a, Array2<f64>>, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn is_softmax(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Softmax(_))
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Input, true)
    }

    /// Non-differentiable leaf borrowed from the caller.
    pub fn constant(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Input, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.dim(), (1, 1), "not a scalar node");
        value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(value), Op::MatMul(a, b), rg)
    }

    pub fn spmm(&mut self, adj: &'a NormalizedAdjacency, x: Var) -> Var {
        let value = adj.matmul(self.value(x).view());
        let rg = self.needs(x);
        self.push(Cow::Owned(value), Op::SpMM(adj, x), rg)
    }

    /// `x · w` for a constant sparse `x`, e.g. the (masked) input features.
    pub fn sparse_matmul(&mut self, x: Cow<'a, CsrMatrix>, w: Var) -> Var {
        let value = x.matmul(self.value(w).view());
        let rg = self.needs(w);
        self.push(Cow::Owned(value), Op::SparseLeft(x, w), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.needs(x);
        self.push(Cow::Owned(value), Op::Relu(x), rg)
    }

    /// Element-wise product with a constant mask (inverted dropout).
    pub fn mul_const(&mut self, x: Var, mask: Array2<f64>) -> Var {
        assert_eq!(self.value(x).dim(), mask.dim(), "mask shape mismatch");
        let value = self.value(x) * &mask;
        let rg = self.needs(x);
        self.push(Cow::Owned(value), Op::MulConst(x, mask), rg)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let value = row_softmax(self.value(x));
        let rg = self.needs(x);
        self.push(Cow::Owned(value), Op::Softmax(x), rg)
    }

    /// `-Σ w · ln probs[row][class]`. `probs` must be a softmax node.
    pub fn weighted_nll(&mut self, probs: Var, picks: Vec<Pick>) -> Var {
        assert!(self.is_softmax(probs), "weighted_nll expects softmax output");
        let value = weighted_nll_value(self.value(probs), &picks);
        let rg = self.needs(probs);
        self.push(Cow::Owned(scalar(value)), Op::WeightedNll(probs, picks), rg)
    }

    /// KL divergence from `prior` to the mean of `probs` over `rows`.
    pub fn prior_kl(&mut self, probs: Var, rows: Vec<usize>, prior: Vec<f64>) -> Var {
        assert!(self.is_softmax(probs), "prior_kl expects softmax output");
        assert!(!rows.is_empty(), "prior_kl over an empty row set");
        assert_eq!(prior.len(), self.value(probs).ncols(), "prior length mismatch");
        let value = prior_kl_value(self.value(probs), &rows, &prior);
        let rg = self.needs(probs);
        self.push(Cow::Owned(scalar(value)), Op::PriorKl(probs, rows, prior), rg)
    }

    pub fn gce(&mut self, probs: Var, picks: Vec<Pick>, q: f64) -> Var {
        assert!(self.is_softmax(probs), "gce expects softmax output");
        assert!(q > 0.0, "gce exponent must be positive");
        let value = gce_value(self.value(probs), &picks, q);
        let rg = self.needs(probs);
        self.push(Cow::Owned(scalar(value)), Op::Gce(probs, picks, q), rg)
    }

    /// `Σ c_i · x_i` over scalar nodes.
    pub fn linear(&mut self, terms: Vec<(Var, f64)>) -> Var {
        let value = terms.iter().map(|&(v, c)| c * self.scalar(v)).sum::<f64>();
        let rg = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Cow::Owned(scalar(value)), Op::Linear(terms), rg)
    }

    /// Gradients of scalar `loss` with respect to every differentiable node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let send = |grads: &mut Vec<Option<Array2<f64>>>, to: Var, delta: Array2<f64>| {
                if self.needs(to) {
                    match &mut grads[to.0] {
                        Some(acc) => *acc += &delta,
                        slot => *slot = Some(delta),
                    }
                }
            };
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        send(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        send(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                // The normalised adjacency is symmetric, so it is its own transpose.
                Op::SpMM(adj, x) => send(&mut grads, *x, adj.matmul(g.view())),
                Op::SparseLeft(x, w) => send(&mut grads, *w, x.t_matmul(g.view())),
                Op::Relu(x) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    send(&mut grads, *x, d);
                }
                Op::MulConst(x, mask) => send(&mut grads, *x, g * mask),
                Op::Softmax(x) => {
                    let p = &node.value;
                    let mut d = g;
                    for (mut d_row, p_row) in d.rows_mut().into_iter().zip(p.rows()) {
                        let s = d_row.dot(&p_row);
                        ndarray::Zip::from(&mut d_row)
                            .and(&p_row)
                            .for_each(|d, &p| *d = p * (*d - s));
                    }
                    send(&mut grads, *x, d);
                }
                Op::WeightedNll(probs, picks) => {
                    let upstream = g[[0, 0]];
                    let p = self.value(*probs);
                    let mut d = Array2::zeros(p.dim());
                    for pick in picks {
                        d[[pick.row, pick.class]] -= upstream * pick.weight / p[[pick.row, pick.class]];
                    }
                    send(&mut grads, *probs, d);
                }
                Op::PriorKl(probs, rows, prior) => {
                    let upstream = g[[0, 0]];
                    let p = self.value(*probs);
                    let mean = mean_rows(p, rows);
                    let inv_rows = 1.0 / rows.len() as f64;
                    let per_class: Vec<f64> = prior
                        .iter()
                        .zip(&mean)
                        .map(|(&pj, &fj)| if pj > 0.0 { -upstream * pj / fj * inv_rows } else { 0.0 })
                        .collect();
                    let mut d = Array2::zeros(p.dim());
                    for &r in rows {
                        for (j, &v) in per_class.iter().enumerate() {
                            d[[r, j]] += v;
                        }
                    }
                    send(&mut grads, *probs, d);
                }
                Op::Gce(probs, picks, q) => {
                    let upstream = g[[0, 0]];
                    let p = self.value(*probs);
                    let mut d = Array2::zeros(p.dim());
                    for pick in picks {
                        d[[pick.row, pick.class]] -= upstream * pick.weight * p[[pick.row, pick.class]].powf(q - 1.0);
                    }
                    send(&mut grads, *probs, d);
                }
                Op::Linear(terms) => {
                    for &(v, c) in terms {
                        send(&mut grads, v, &g * c);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

/// Result of [`Tape::backward`]; only leaves keep their gradient.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of a differentiable leaf; zeros if the loss does not depend on it.
    pub fn wrt(&self, tape: &Tape<'_>, leaf: Var) -> Array2<f64> {
        match &self.grads[leaf.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(tape.value(leaf).dim()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    fn row_sums(m: &Array2<f64>) -> ndarray::Array1<f64> {
        m.sum_axis(Axis(1))
    }

    fn central_difference(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64, step: f64) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        for idx in ndarray::indices(x.dim()) {
            let mut plus = x.clone();
            plus[idx] += step;
            let mut minus = x.clone();
            minus[idx] -= step;
            out[idx] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
        out
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b) {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-3);
            assert!(rel < tol, "analytic {x} vs numeric {y}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_for_large_logits() {
        let logits = array![[50.0, -50.0, 0.0], [-50.0, -50.0, -50.0], [49.9, 50.0, -3.0]];
        for s in row_sums(&row_softmax(&logits)) {
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(array![[1.0, 2.0]]);
        let probs = tape.softmax(w);
        let zero = tape.weighted_nll(
            probs,
            vec![Pick {
                row: 0,
                class: 0,
                weight: 0.0,
            }],
        );
        let g = tape.backward(zero).wrt(&tape, w);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_input_product_matches_dense() {
        let x = array![[0.0, 1.5, 0.0], [2.0, 0.0, -1.0]];
        let w = array![[0.3, -0.2], [0.1, 0.4], [-0.5, 0.6]];
        let sparse = CsrMatrix::from_dense(&x);
        let run = |use_sparse: bool| {
            let mut tape = Tape::new();
            let wv = tape.param(w.clone());
            let h = if use_sparse {
                tape.sparse_matmul(Cow::Borrowed(&sparse), wv)
            } else {
                let xv = tape.constant(&x);
                tape.matmul(xv, wv)
            };
            let p = tape.softmax(h);
            let l = tape.weighted_nll(
                p,
                vec![Pick {
                    row: 1,
                    class: 0,
                    weight: 1.0,
                }],
            );
            (tape.scalar(l), tape.backward(l).wrt(&tape, wv))
        };
        let (a, ga) = run(true);
        let (b, gb) = run(false);
        assert!((a - b).abs() < 1e-15);
        assert_close(&ga, &gb, 1e-14);
    }

    #[test]
    fn composite_chain_matches_finite_differences() {
        let adj = NormalizedAdjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let x = array![[0.3, -1.2], [0.8, 0.1], [-0.5, 0.9]];
        let mask = array![[2.0, 0.0, 2.0], [2.0, 2.0, 0.0], [0.0, 2.0, 2.0]];
        let w0 = array![[0.4, -0.7, 0.2], [0.9, 0.3, -0.6]];
        let loss = |w: &Array2<f64>| -> (f64, Array2<f64>) {
            let mut tape = Tape::new();
            let xv = tape.constant(&x);
            let wv = tape.param(w.clone());
            let h = tape.matmul(xv, wv);
            let h = tape.spmm(&adj, h);
            let h = tape.relu(h);
            let h = tape.mul_const(h, mask.clone());
            let p = tape.softmax(h);
            let a = tape.weighted_nll(
                p,
                vec![
                    Pick {
                        row: 0,
                        class: 1,
                        weight: 0.7,
                    },
                    Pick {
                        row: 2,
                        class: 0,
                        weight: 1.0,
                    },
                ],
            );
            let b = tape.prior_kl(p, vec![0, 1, 2], vec![0.5, 0.0, 0.5]);
            let c = tape.gce(
                p,
                vec![Pick {
                    row: 1,
                    class: 2,
                    weight: 1.0,
                }],
                0.7,
            );
            let total = tape.linear(vec![(a, 0.5), (b, 1.5), (c, 2.0)]);
            let g = tape.backward(total).wrt(&tape, wv);
            (tape.scalar(total), g)
        };
        let (_, analytic) = loss(&w0);
        let numeric = central_difference(&w0, |w| loss(w).0, 1e-5);
        assert_close(&analytic, &numeric, 1e-6);
    }
}
