//! Sweep alpha, beta and the walk length at 40% symmetric noise.
//!
//! ```bash
//! cargo run --release --example sensitivity_sweep -- /tmp/sweep
//! ```

use unionnet::dataset::SbmSpec;
use unionnet::experiment::{run_sweep_on, DatasetSource, ExperimentSpec, NoiseSetting, SweepParam};
use unionnet::noise::NoiseType;
use unionnet::trainer::{Method, TrainConfig};

fn main() -> unionnet::Result<()> {
    env_logger::init();
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("unionnet-sweep"));
    let spec = ExperimentSpec {
        dataset: DatasetSource::Sbm(SbmSpec::fixture(0)),
        walk_length: None,
        noise: vec![NoiseSetting {
            noise_type: NoiseType::Symmetric,
            rate: 0.4,
        }],
        methods: vec![Method::Unionnet],
        seeds: vec![0, 1, 2],
        out,
        train: TrainConfig::default(),
    };
    let graph = spec.dataset.load()?;

    let sweeps = [
        (SweepParam::Alpha, vec![0.0, 0.25, 0.5, 0.75, 1.0]),
        (SweepParam::Beta, vec![0.0, 0.5, 1.0, 2.0]),
        (SweepParam::WalkLength, vec![2.0, 5.0, 10.0, 20.0]),
    ];
    for (param, values) in sweeps {
        println!("{param}");
        for p in run_sweep_on(&spec, &graph, param, &values)? {
            println!("  {:>5}  {:.4} ± {:.4}", p.value, p.mean_f1, p.std_f1);
        }
    }
    Ok(())
}
