//! Graph data model, symmetric adjacency normalisation and uniform random walks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Which part of the transductive split a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "none" => Ok(Split::None),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Undirected attributed graph with ground-truth labels and a node split.
///
/// Edges are stored once as `(i, j)` with `i < j`; self-loops and duplicates
/// are removed on construction. Using one [`Split`] per node keeps the
/// train/val/test masks disjoint by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    features: Array2<f64>,
    sparse_features: CsrMatrix,
    labels: Vec<usize>,
    split: Vec<Split>,
}

/// Strips self-loops, orders each pair and removes duplicates.
///
/// Returns the cleaned edge list together with the number of self-loops that
/// were dropped.
pub fn sanitize_edges(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<(Vec<(usize, usize)>, usize)> {
    let mut set = BTreeSet::new();
    let mut self_loops = 0;
    for (i, j) in edges {
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        if i == j {
            self_loops += 1;
            continue;
        }
        set.insert((i.min(j), i.max(j)));
    }
    Ok((set.into_iter().collect(), self_loops))
}

impl Graph {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        num_classes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 || num_classes == 0 {
            return Err(Error::InvalidGraph(format!(
                "n, d and m must be positive (got n={n}, d={d}, m={num_classes})"
            )));
        }
        if labels.len() != n || split.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{n} feature rows but {} labels and {} split entries",
                labels.len(),
                split.len()
            )));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "node {node} has label {label} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node features"));
        }
        let (edges, _) = sanitize_edges(n, edges)?;
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            name: name.into(),
            num_classes,
            edges,
            neighbors,
            sparse_features: CsrMatrix::from_dense(&features),
            features,
            labels,
            split,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Undirected edges, each once with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// The feature matrix in sparse form, as consumed by the GCN.
    pub fn sparse_features(&self) -> &CsrMatrix {
        &self.sparse_features
    }

    /// Ground-truth (clean) labels of every node.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn mask(&self, which: Split) -> Vec<bool> {
        self.split.iter().map(|&s| s == which).collect()
    }

    /// Node ids in `which`, ascending.
    pub fn nodes_in(&self, which: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == which)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Symmetrically normalised adjacency with self-loops,
/// `D^-1/2 (A + I) D^-1/2`, in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(CsrMatrix);

impl NormalizedAdjacency {
    /// Builds the normalised matrix from a raw undirected edge list.
    /// Self-loops in the input are ignored (one is always added).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let (edges, _) = sanitize_edges(n, edges.iter().copied())?;
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in &edges {
            rows[i].push(j);
            rows[j].push(i);
        }
        let inv_sqrt_deg: Vec<f64> = rows.iter().map(|r| 1.0 / (r.len() as f64).sqrt()).collect();
        let entries = rows.into_iter().enumerate().map(|(i, mut row)| {
            row.sort_unstable();
            row.into_iter()
                .map(|j| (j, inv_sqrt_deg[i] * inv_sqrt_deg[j]))
                .collect()
        });
        Ok(Self(CsrMatrix::from_rows(n, entries)))
    }

    pub fn identity(n: usize) -> Self {
        Self(CsrMatrix::from_rows(n, (0..n).map(|i| vec![(i, 1.0)])))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.0.nnz()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.0.to_dense()
    }

    /// Sparse-dense product `self · rhs`.
    pub fn matmul(&self, rhs: ArrayView2<'_, f64>) -> Array2<f64> {
        self.0.matmul(rhs)
    }
}

pub fn normalize_adjacency(graph: &Graph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_edges(graph.num_nodes(), graph.edges())
        .expect("graph edges are validated on construction")
}

/// Random walk parameters used to harvest context nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 10,
            walks_per_node: 10,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length == 0 || self.walks_per_node == 0 {
            return Err(Error::Config(format!(
                "walk_length and walks_per_node must be >= 1 (got {} and {})",
                self.walk_length, self.walks_per_node
            )));
        }
        Ok(())
    }
}

/// Uniform random walk of `walk_length` steps leaving `start`.
///
/// The start node itself is not emitted; the first element is one of its
/// neighbours. A node without neighbours yields an empty walk.
pub fn random_walk<R: Rng + ?Sized>(graph: &Graph, start: usize, walk_length: usize, rng: &mut R) -> Vec<usize> {
    assert!(start < graph.num_nodes(), "walk start {start} out of range");
    let mut walk = Vec::with_capacity(walk_length);
    let mut current = start;
    for _ in 0..walk_length {
        let nbrs = graph.neighbors(current);
        if nbrs.is_empty() {
            break;
        }
        current = nbrs[rng.gen_range(0..nbrs.len())];
        walk.push(current);
    }
    walk
}

/// Multiset union of `walks_per_node` walks from `anchor`, with every
/// occurrence of the anchor removed. Order of visits is preserved.
pub fn collect_context<R: Rng + ?Sized>(graph: &Graph, anchor: usize, cfg: &WalkConfig, rng: &mut R) -> Vec<usize> {
    let mut context = Vec::with_capacity(cfg.walk_length * cfg.walks_per_node);
    for _ in 0..cfg.walks_per_node {
        context.extend(
            random_walk(graph, anchor, cfg.walk_length, rng)
                .into_iter()
                .filter(|&v| v != anchor),
        );
    }
    context
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Graph with one-dimensional zero features, all nodes labelled 0 and in train.
    pub fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(
            "fixture",
            Array2::zeros((n, 1)),
            2,
            edges.iter().copied(),
            vec![0; n],
            vec![Split::Train; n],
        )
        .unwrap()
    }
}
