//! A small resumable noise grid written to disk.
//!
//! ```bash
//! cargo run --release --example noise_grid -- /tmp/grid
//! ```
//!
//! Running it twice reuses the per-cell markers from the first run.

use unionnet::dataset::SbmSpec;
use unionnet::experiment::{run_experiment, DatasetSource, ExperimentSpec, NoiseSetting};
use unionnet::noise::NoiseType;
use unionnet::trainer::{Method, TrainConfig};

fn main() -> unionnet::Result<()> {
    env_logger::init();
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("unionnet-grid"));

    let noise = [
        (NoiseType::Symmetric, 0.2),
        (NoiseType::Symmetric, 0.4),
        (NoiseType::Pairflip, 0.3),
    ]
    .map(|(noise_type, rate)| NoiseSetting { noise_type, rate });
    let spec = ExperimentSpec {
        dataset: DatasetSource::Sbm(SbmSpec::fixture(0)),
        walk_length: None,
        noise: noise.to_vec(),
        methods: vec![Method::GcnCe, Method::Gce, Method::Unionnet],
        seeds: vec![0, 1, 2],
        out: out.clone(),
        train: TrainConfig::default(),
    };
    let table = run_experiment(&spec)?;
    print!("{}", table.to_text());
    println!("results in {}", out.display());
    Ok(())
}
