//! Label-noise transition matrices and transductive corruption of training labels.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseType {
    /// A class flips to every other class with equal probability.
    Symmetric,
    /// A class flips only to its cyclic successor `(i + 1) mod m`.
    Pairflip,
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseType::Symmetric => "symmetric",
            NoiseType::Pairflip => "pairflip",
        })
    }
}

impl FromStr for NoiseType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(NoiseType::Symmetric),
            "pairflip" | "asymmetric" => Ok(NoiseType::Pairflip),
            other => Err(format!("unknown noise type `{other}`")),
        }
    }
}

/// Row-stochastic `m × m` matrix with `Q[i][j] = p(noisy = j | clean = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    q: Array2<f64>,
    noise_type: NoiseType,
    rate: f64,
}

pub fn build_transition(noise_type: NoiseType, rate: f64, m: usize) -> Result<TransitionMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("noise rate must lie in [0, 1), got {rate}")));
    }
    if m < 2 {
        return Err(Error::Config(format!("noise needs at least 2 classes, got {m}")));
    }
    let keep = 1.0 - rate;
    let q = match noise_type {
        NoiseType::Symmetric => {
            let off = rate / (m - 1) as f64;
            Array2::from_shape_fn((m, m), |(i, j)| if i == j { keep } else { off })
        }
        NoiseType::Pairflip => Array2::from_shape_fn((m, m), |(i, j)| {
            if i == j {
                keep
            } else if j == (i + 1) % m {
                rate
            } else {
                0.0
            }
        }),
    };
    Ok(TransitionMatrix { q, noise_type, rate })
}

impl TransitionMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn num_classes(&self) -> usize {
        self.q.nrows()
    }

    pub fn noise_type(&self) -> NoiseType {
        self.noise_type
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Draws a noisy label from row `clean` by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, clean: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let row = self.q.row(clean);
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(clean)
    }
}

/// One relabelled training node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flip {
    pub node: usize,
    pub clean: usize,
    pub noisy: usize,
}

/// Observed labels after corruption.
///
/// `labels` covers every node; only training nodes can differ from the
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedLabels {
    pub labels: Vec<usize>,
    pub flips: Vec<Flip>,
}

impl CorruptedLabels {
    /// Labels with no noise applied.
    pub fn clean(graph: &Graph) -> Self {
        Self {
            labels: graph.labels().to_vec(),
            flips: Vec::new(),
        }
    }

    pub fn flip_fraction(&self, graph: &Graph) -> f64 {
        let train = graph.nodes_in(Split::Train).len();
        if train == 0 {
            0.0
        } else {
            self.flips.len() as f64 / train as f64
        }
    }

    /// Writes the audit log as `node<TAB>clean<TAB>noisy` lines.
    pub fn write_flip_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for f in &self.flips {
            writeln!(out, "{}\t{}\t{}", f.node, f.clean, f.noisy)?;
        }
        Ok(())
    }
}

/// Corrupts the labels of training nodes, each independently from its
/// clean class's row of `q`. Validation and test labels are left untouched.
pub fn corrupt_labels(graph: &Graph, q: &TransitionMatrix, seed: u64) -> Result<CorruptedLabels> {
    if q.num_classes() != graph.num_classes() {
        return Err(Error::Config(format!(
            "transition matrix has {} classes, graph has {}",
            q.num_classes(),
            graph.num_classes()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut labels = graph.labels().to_vec();
    let mut flips = Vec::new();
    for node in graph.nodes_in(Split::Train) {
        let clean = labels[node];
        let noisy = q.sample(clean, &mut rng);
        if noisy != clean {
            labels[node] = noisy;
            flips.push(Flip { node, clean, noisy });
        }
    }
    Ok(CorruptedLabels { labels, flips })
}
