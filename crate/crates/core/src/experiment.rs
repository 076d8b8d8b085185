//! Noise-grid experiments and one-parameter sensitivity sweeps.
//!
//! An experiment directory holds one JSON marker per finished cell under
//! `cells/`, the per-epoch log of each cell under `logs/`, and the aggregated
//! `results.csv` / `results.txt`. Rerunning the same spec skips every cell
//! that already has a marker.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_sbm, load_bundle, SbmSpec};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::noise::{build_transition, corrupt_labels, NoiseType};
use crate::seed::Seeds;
use crate::trainer::{train, Method, RunResult, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Bundle(PathBuf),
    Sbm(SbmSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            DatasetSource::Bundle(path) => load_bundle(path),
            DatasetSource::Sbm(spec) => generate_sbm(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetting {
    #[serde(rename = "type")]
    pub noise_type: NoiseType,
    pub rate: f64,
}

impl fmt::Display for NoiseSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.noise_type, self.rate)
    }
}

/// Grid specification, usually read from TOML:
///
/// ```toml
/// out = "runs/sbm"
/// methods = ["gcn_ce", "unionnet"]
/// seeds = [0, 1, 2, 3, 4]
///
/// [dataset.sbm]
/// blocks = 3
/// nodes_per_block = 200
/// p_in = 0.05
/// p_out = 0.005
/// feature_dim = 16
/// feature_signal = 1.0
///
/// [[noise]]
/// type = "symmetric"
/// rate = 0.4
///
/// [train]
/// epochs = 400
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    /// Overrides `train.walk.walk_length` for this dataset.
    #[serde(default)]
    pub walk_length: Option<usize>,
    pub noise: Vec<NoiseSetting>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Base configuration. `method` and the seeds are set per cell.
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("noise grid, methods and seeds must be non-empty".into()));
        }
        for n in &self.noise {
            if !(0.0..1.0).contains(&n.rate) {
                return Err(Error::Config(format!("noise rate {} outside [0, 1)", n.rate)));
            }
        }
        self.base_config().validate()
    }

    fn base_config(&self) -> TrainConfig {
        let mut cfg = self.train;
        if let Some(len) = self.walk_length {
            cfg.walk.walk_length = len;
        }
        cfg
    }

    /// Effective configuration of one cell.
    pub fn cell_config(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            ..self.base_config()
        }
        .with_master_seed(seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub method: Method,
    pub noise: NoiseSetting,
    pub seed: u64,
}

impl CellKey {
    pub fn id(&self) -> String {
        format!("{}_{}_seed{}", self.method, self.noise, self.seed)
    }
}

/// On-disk marker of a finished cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub dataset: String,
    pub method: Method,
    pub noise_type: NoiseType,
    pub rate: f64,
    pub seed: u64,
    pub flip_fraction: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_f1: f64,
    pub test_f1: f64,
    pub config: TrainConfig,
}

/// Corrupts labels with the seed's noise stream and trains one model.
pub fn run_cell(graph: &Graph, key: &CellKey, cfg: &TrainConfig) -> Result<(CellRecord, RunResult)> {
    let q = build_transition(key.noise.noise_type, key.noise.rate, graph.num_classes())?;
    let noisy = corrupt_labels(graph, &q, Seeds::from_master(key.seed).noise)?;
    let run = train(graph, &noisy.labels, cfg)?;
    let record = CellRecord {
        dataset: graph.name().to_string(),
        method: key.method,
        noise_type: key.noise.noise_type,
        rate: key.noise.rate,
        seed: key.seed,
        flip_fraction: noisy.flip_fraction(graph),
        best_epoch: run.best_epoch,
        epochs_run: run.log.len(),
        val_f1: run.val_f1,
        test_f1: run.test_f1,
        config: *cfg,
    };
    Ok((record, run))
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_marker(path: &Path) -> Result<Option<CellRecord>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub noise: NoiseSetting,
    pub mean_f1: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_f1: f64,
    pub runs: usize,
    pub failed_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub dataset: String,
    pub rows: Vec<ResultRow>,
}

pub const RESULTS_HEADER: &str = "dataset,method,noise_type,rate,mean_f1,std_f1,runs,failed";

impl ResultsTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| !r.failed_seeds.is_empty())
    }

    pub fn row(&self, method: Method, noise: NoiseSetting) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.noise == noise)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{RESULTS_HEADER}\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.dataset,
                r.method,
                r.noise.noise_type,
                r.noise.rate,
                r.mean_f1,
                r.std_f1,
                r.runs,
                r.failed_seeds.len()
            )
            .unwrap();
        }
        s
    }

    /// Human-readable rendering of [`Self::to_csv`].
    pub fn to_text(&self) -> String {
        let header = ["dataset", "method", "noise", "rate", "micro-F1", "runs", "failed"];
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    self.dataset.clone(),
                    r.method.to_string(),
                    r.noise.noise_type.to_string(),
                    format!("{:.2}", r.noise.rate),
                    format!("{:.4} ± {:.4}", r.mean_f1, r.std_f1),
                    r.runs.to_string(),
                    r.failed_seeds.len().to_string(),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut s = String::new();
        let mut line = |fields: &[&str]| {
            let parts: Vec<String> = fields.iter().zip(&widths).map(|(f, &w)| format!("{f:<w$}")).collect();
            writeln!(s, "{}", parts.join("  ").trim_end()).unwrap();
        };
        line(&header);
        for row in &cells {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        s
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (noise, method, seed) cell not yet on disk, then writes the
/// aggregated tables. A failing cell is logged and reported in the table;
/// the others still run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultsTable> {
    spec.validate()?;
    let graph = spec.dataset.load()?;
    run_experiment_on(spec, &graph)
}

/// [`run_experiment`] on an already loaded graph.
pub fn run_experiment_on(spec: &ExperimentSpec, graph: &Graph) -> Result<ResultsTable> {
    spec.validate()?;
    let cells_dir = spec.out.join("cells");
    let logs_dir = spec.out.join("logs");
    fs::create_dir_all(&cells_dir)?;
    fs::create_dir_all(&logs_dir)?;

    let keys: Vec<CellKey> = spec
        .noise
        .iter()
        .flat_map(|&noise| {
            spec.methods
                .iter()
                .flat_map(move |&method| spec.seeds.iter().map(move |&seed| CellKey { method, noise, seed }))
        })
        .collect();

    let outcomes: Vec<Result<CellRecord>> = keys
        .par_iter()
        .map(|key| {
            let cfg = spec.cell_config(key.method, key.seed);
            let marker = cells_dir.join(format!("{}.json", key.id()));
            if let Some(done) = read_marker(&marker)? {
                if done.config != cfg || done.dataset != graph.name() {
                    return Err(Error::Config(format!(
                        "{} was produced by a different configuration; use a fresh output directory",
                        marker.display()
                    )));
                }
                log::info!("{}: already done", key.id());
                return Ok(done);
            }
            let (record, run) = run_cell(graph, key, &cfg).inspect_err(|e| {
                log::error!("{}: {e}", key.id());
            })?;
            write_atomic(&logs_dir.join(format!("{}.csv", key.id())), &run.log_csv())?;
            let json = serde_json::to_string_pretty(&record).expect("record serialises");
            write_atomic(&marker, &json)?;
            log::info!("{}: test micro-F1 {:.4}", key.id(), record.test_f1);
            Ok(record)
        })
        .collect();

    let mut rows = Vec::new();
    for &noise in &spec.noise {
        for &method in &spec.methods {
            let mut scores = Vec::new();
            let mut failed_seeds = Vec::new();
            for (key, outcome) in keys.iter().zip(&outcomes) {
                if key.noise != noise || key.method != method {
                    continue;
                }
                match outcome {
                    Ok(r) => scores.push(r.test_f1),
                    Err(Error::Config(msg)) => return Err(Error::Config(msg.clone())),
                    Err(_) => failed_seeds.push(key.seed),
                }
            }
            let (mean_f1, std_f1) = mean_std(&scores);
            rows.push(ResultRow {
                method,
                noise,
                mean_f1,
                std_f1,
                runs: scores.len(),
                failed_seeds,
            });
        }
    }
    let table = ResultsTable {
        dataset: graph.name().to_string(),
        rows,
    };
    write_atomic(&spec.out.join("results.csv"), &table.to_csv())?;
    write_atomic(&spec.out.join("results.txt"), &table.to_text())?;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Beta,
    WalkLength,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::WalkLength => "walk_length",
        }
    }

    /// `cfg` with the parameter set to `value`, or `None` if the value is
    /// not admissible.
    pub fn apply(self, cfg: &TrainConfig, value: f64) -> Option<TrainConfig> {
        let mut cfg = *cfg;
        match self {
            SweepParam::Alpha => cfg.alpha = value,
            SweepParam::Beta => cfg.beta = value,
            SweepParam::WalkLength => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return None;
                }
                cfg.walk.walk_length = value as usize;
            }
        }
        cfg.validate().ok().map(|_| cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            "walk_length" | "walk-length" => Ok(SweepParam::WalkLength),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub runs: usize,
    pub failed: usize,
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("value,mean_f1,std_f1\n");
    for p in points {
        writeln!(s, "{},{},{}", p.value, p.mean_f1, p.std_f1).unwrap();
    }
    s
}

/// Full-method runs over `values` of one parameter, at the first noise
/// setting of `spec`, averaged over its seeds. Writes `sweep_<param>.csv`
/// into `spec.out`.
pub fn run_sweep(spec: &ExperimentSpec, param: SweepParam, values: &[f64]) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let graph = spec.dataset.load()?;
    run_sweep_on(spec, &graph, param, values)
}

/// [`run_sweep`] on an already loaded graph.
pub fn run_sweep_on(
    spec: &ExperimentSpec,
    graph: &Graph,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let noise = spec.noise[0];
    let mut jobs = Vec::new();
    for &value in values {
        let base = spec.cell_config(Method::Unionnet, 0);
        if param.apply(&base, value).is_none() {
            log::warn!("skipping {param} = {value}: not a valid setting");
            continue;
        }
        for &seed in &spec.seeds {
            let cfg = param
                .apply(&spec.cell_config(Method::Unionnet, seed), value)
                .expect("validity does not depend on the seed");
            jobs.push((
                value,
                CellKey {
                    method: Method::Unionnet,
                    noise,
                    seed,
                },
                cfg,
            ));
        }
    }
    let scores: Vec<(f64, Option<f64>)> = jobs
        .par_iter()
        .map(|(value, key, cfg)| match run_cell(graph, key, cfg) {
            Ok((record, _)) => (*value, Some(record.test_f1)),
            Err(e) => {
                log::error!("{param} = {value}, seed {}: {e}", key.seed);
                (*value, None)
            }
        })
        .collect();

    let mut points: Vec<SweepPoint> = Vec::new();
    for group in scores.chunk_by(|a, b| a.0 == b.0) {
        let ok: Vec<f64> = group.iter().filter_map(|(_, s)| *s).collect();
        let (mean_f1, std_f1) = mean_std(&ok);
        points.push(SweepPoint {
            value: group[0].0,
            mean_f1,
            std_f1,
            runs: ok.len(),
            failed: group.len() - ok.len(),
        });
    }
    fs::create_dir_all(&spec.out)?;
    write_atomic(&spec.out.join(format!("sweep_{param}.csv")), &sweep_csv(&points))?;
    Ok(points)
}
