//! Graph bundles on disk and synthetic stochastic-block-model graphs.
//!
//! A bundle is a directory of five line-oriented UTF-8 files:
//!
//! | file           | contents                                  |
//! |----------------|-------------------------------------------|
//! | `meta.tsv`     | one line `name<TAB>n<TAB>d<TAB>m`         |
//! | `edges.tsv`    | one `i<TAB>j` pair per line, 0-based       |
//! | `features.tsv` | `n` lines of `d` tab-separated floats      |
//! | `labels.tsv`   | `n` lines, one integer class id            |
//! | `masks.tsv`    | `n` lines, one of `train`/`val`/`test`/`none` |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};
use crate::graph::{sanitize_edges, Graph, Split};
use crate::seed::stream_rng;

pub const META_FILE: &str = "meta.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const MASKS_FILE: &str = "masks.tsv";

fn read(dir: &Path, file: &'static str) -> Result<String, LoadError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(LoadError::MissingFile(path));
    }
    fs::read_to_string(&path).map_err(|source| LoadError::Io { path, source })
}

fn parse<T: std::str::FromStr>(file: &'static str, line: usize, field: &str) -> Result<T, LoadError>
where
    T::Err: std::fmt::Display,
{
    field.trim().parse().map_err(|e: T::Err| LoadError::Parse {
        file,
        line: line + 1,
        message: format!("`{field}`: {e}"),
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty())
}

/// Loads and validates a graph bundle.
///
/// Duplicate edges are merged and self-loops dropped (with a logged warning).
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta = read(dir, META_FILE)?;
    let edges_text = read(dir, EDGES_FILE)?;
    let features_text = read(dir, FEATURES_FILE)?;
    let labels_text = read(dir, LABELS_FILE)?;
    let masks_text = read(dir, MASKS_FILE)?;

    let meta_line = meta.lines().next().unwrap_or_default();
    let fields: Vec<&str> = meta_line.split('\t').collect();
    if fields.len() != 4 {
        return Err(LoadError::DimensionMismatch {
            file: META_FILE,
            what: "fields",
            expected: 4,
            found: fields.len(),
        }
        .into());
    }
    let name = fields[0].to_string();
    let n: usize = parse(META_FILE, 0, fields[1])?;
    let d: usize = parse(META_FILE, 0, fields[2])?;
    let m: usize = parse(META_FILE, 0, fields[3])?;

    let feature_rows: Vec<(usize, &str)> = content_lines(&features_text).collect();
    if feature_rows.len() != n {
        return Err(LoadError::DimensionMismatch {
            file: FEATURES_FILE,
            what: "rows",
            expected: n,
            found: feature_rows.len(),
        }
        .into());
    }
    let mut features = Array2::zeros((n, d));
    for (row, (line_no, line)) in feature_rows.into_iter().enumerate() {
        let values: Vec<&str> = line.split('\t').collect();
        if values.len() != d {
            return Err(LoadError::DimensionMismatch {
                file: FEATURES_FILE,
                what: "columns",
                expected: d,
                found: values.len(),
            }
            .into());
        }
        for (col, v) in values.into_iter().enumerate() {
            features[[row, col]] = parse(FEATURES_FILE, line_no, v)?;
        }
    }

    let labels: Vec<usize> = content_lines(&labels_text)
        .map(|(i, l)| parse(LABELS_FILE, i, l))
        .collect::<Result<_, _>>()?;
    if labels.len() != n {
        return Err(LoadError::DimensionMismatch {
            file: LABELS_FILE,
            what: "rows",
            expected: n,
            found: labels.len(),
        }
        .into());
    }
    if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= m) {
        return Err(LoadError::LabelOutOfRange {
            node,
            label,
            classes: m,
        }
        .into());
    }

    let split: Vec<Split> = content_lines(&masks_text)
        .map(|(i, l)| parse(MASKS_FILE, i, l))
        .collect::<Result<_, _>>()?;
    if split.len() != n {
        return Err(LoadError::DimensionMismatch {
            file: MASKS_FILE,
            what: "rows",
            expected: n,
            found: split.len(),
        }
        .into());
    }

    let mut edges = Vec::new();
    for (i, line) in content_lines(&edges_text) {
        let pair: Vec<&str> = line.split('\t').collect();
        if pair.len() != 2 {
            return Err(LoadError::Parse {
                file: EDGES_FILE,
                line: i + 1,
                message: format!("expected 2 fields, found {}", pair.len()),
            }
            .into());
        }
        edges.push((parse(EDGES_FILE, i, pair[0])?, parse(EDGES_FILE, i, pair[1])?));
    }
    let (edges, self_loops) = sanitize_edges(n, edges)?;
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loop(s)", dir.display());
    }

    Graph::new(name, features, m, edges, labels, split)
}

/// Writes `graph` as a bundle; [`load_bundle`] reads it back identically.
pub fn write_bundle(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let create = |file: &str| -> Result<BufWriter<fs::File>> { Ok(BufWriter::new(fs::File::create(dir.join(file))?)) };

    let mut w = create(META_FILE)?;
    writeln!(
        w,
        "{}\t{}\t{}\t{}",
        graph.name(),
        graph.num_nodes(),
        graph.feature_dim(),
        graph.num_classes()
    )?;
    w.flush()?;

    let mut w = create(EDGES_FILE)?;
    for &(i, j) in graph.edges() {
        writeln!(w, "{i}\t{j}")?;
    }
    w.flush()?;

    let mut w = create(FEATURES_FILE)?;
    for row in graph.features().rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b"\t")?;
            }
            // `{}` on f64 prints the shortest string that round-trips.
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut w = create(LABELS_FILE)?;
    for l in graph.labels() {
        writeln!(w, "{l}")?;
    }
    w.flush()?;

    let mut w = create(MASKS_FILE)?;
    for s in graph.split() {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Stochastic block model with Gaussian class-conditional features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Norm of each class-mean feature vector.
    pub feature_signal: f64,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_val_size() -> usize {
    500
}

fn default_test_size() -> usize {
    1000
}

/// Fraction of each class placed in the training split.
pub const SBM_TRAIN_FRACTION: f64 = 0.05;

impl SbmSpec {
    /// Three-block, 600-node graph used by the robustness regression tests.
    pub fn fixture(seed: u64) -> Self {
        Self {
            blocks: 3,
            nodes_per_block: 200,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 16,
            feature_signal: 1.0,
            val_size: 150,
            test_size: 420,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.nodes_per_block == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "blocks, nodes_per_block and feature_dim must be positive".into(),
            ));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= p_out <= p_in <= 1 (got p_in={}, p_out={})",
                self.p_in, self.p_out
            )));
        }
        if !(self.feature_signal.is_finite() && self.feature_signal >= 0.0) {
            return Err(Error::Config("feature_signal must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Samples a graph from `spec`. Node `i` belongs to block `i / nodes_per_block`,
/// which is also its ground-truth label.
///
/// Split rule: per class, `round(5%)` of the nodes (at least one) go to
/// train; the remaining nodes are shuffled and the first `val_size` become
/// validation, the next `test_size` test, capped at availability.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let m = spec.blocks;
    let per = spec.nodes_per_block;
    let n = m * per;
    let d = spec.feature_dim;
    let mut rng = stream_rng(spec.seed, 0);

    let means: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.into_iter().map(|v| v * spec.feature_signal / norm).collect()
        })
        .collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / per == j / per { spec.p_in } else { spec.p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let labels: Vec<usize> = (0..n).map(|i| i / per).collect();
    let features = Array2::from_shape_fn((n, d), |(i, k)| means[labels[i]][k]);
    let noise = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
    let features = features + noise;

    let mut split = vec![Split::None; n];
    let train_per_class = ((per as f64 * SBM_TRAIN_FRACTION).round() as usize).clamp(1, per);
    let mut rest = Vec::with_capacity(n);
    for c in 0..m {
        let mut members: Vec<usize> = (c * per..(c + 1) * per).collect();
        members.shuffle(&mut rng);
        for &v in &members[..train_per_class] {
            split[v] = Split::Train;
        }
        rest.extend_from_slice(&members[train_per_class..]);
    }
    rest.shuffle(&mut rng);
    let val_end = spec.val_size.min(rest.len());
    let test_end = (val_end + spec.test_size).min(rest.len());
    for &v in &rest[..val_end] {
        split[v] = Split::Val;
    }
    for &v in &rest[val_end..test_end] {
        split[v] = Split::Test;
    }

    Graph::new(format!("sbm-{m}x{per}"), features, m, edges, labels, split)
}
