use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use unionnet::dataset::{generate_sbm, load_bundle, write_bundle, SbmSpec};
use unionnet::experiment::{run_experiment, run_sweep, ExperimentSpec, SweepParam};
use unionnet::graph::Split;
use unionnet::noise::{build_transition, corrupt_labels, NoiseType};
use unionnet::seed::Seeds;
use unionnet::trainer::{train_with_diagnostics, Method, TrainConfig};

#[derive(Parser)]
#[command(version, about = "Robust GCN training under noisy node labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an SBM bundle, or validate an existing bundle.
    Prepare(PrepareArgs),
    /// Train one model and write its log and checkpoint.
    Train(TrainArgs),
    /// Run the noise grid of an experiment spec.
    Grid {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one hyperparameter at the first noise setting of a spec.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PrepareArgs {
    /// Check this bundle instead of generating one.
    #[arg(long, conflicts_with = "out")]
    validate: Option<PathBuf>,
    #[arg(long, required_unless_present = "validate")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 200)]
    nodes_per_block: usize,
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_signal: f64,
    #[arg(long, default_value_t = 500)]
    val_size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Bundle directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "unionnet")]
    method: Method,
    #[arg(long, default_value = "symmetric")]
    noise: NoiseType,
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
    /// Master seed for noise, initialisation and walks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    walks_per_node: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// 0 disables early stopping.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    gce_q: Option<f64>,
    /// Also write per-epoch anchor estimates under `<out>/diagnostics`.
    #[arg(long)]
    diagnostics: bool,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig {
            method: self.method,
            ..TrainConfig::default()
        }
        .with_master_seed(self.seed);
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field { cfg.$($target).+ = v; })*
            };
        }
        set! {
            alpha => alpha, beta => beta, epochs => epochs, pretrain_epochs => pretrain_epochs,
            gce_q => gce_q, walk_length => walk.walk_length, walks_per_node => walk.walks_per_node,
            lr => hyper.lr, weight_decay => hyper.weight_decay, dropout => hyper.dropout,
            hidden => hyper.hidden,
        }
        if let Some(p) = self.patience {
            cfg.patience = (p > 0).then_some(p);
        }
        cfg
    }
}

fn prepare(args: PrepareArgs) -> unionnet::Result<()> {
    if let Some(dir) = args.validate {
        let g = load_bundle(&dir)?;
        println!(
            "{}: n={} d={} m={} edges={} train={} val={} test={}",
            g.name(),
            g.num_nodes(),
            g.feature_dim(),
            g.num_classes(),
            g.edges().len(),
            g.nodes_in(Split::Train).len(),
            g.nodes_in(Split::Val).len(),
            g.nodes_in(Split::Test).len()
        );
        return Ok(());
    }
    let spec = SbmSpec {
        blocks: args.blocks,
        nodes_per_block: args.nodes_per_block,
        p_in: args.p_in,
        p_out: args.p_out,
        feature_dim: args.feature_dim,
        feature_signal: args.feature_signal,
        val_size: args.val_size,
        test_size: args.test_size,
        seed: args.seed,
    };
    let out = args.out.expect("clap enforces --out");
    write_bundle(&generate_sbm(&spec)?, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn train_one(args: TrainArgs) -> unionnet::Result<()> {
    let cfg = args.config();
    let graph = load_bundle(&args.data)?;
    let q = build_transition(args.noise, args.rate, graph.num_classes())?;
    let noisy = corrupt_labels(&graph, &q, Seeds::from_master(args.seed).noise)?;
    fs::create_dir_all(&args.out)?;
    noisy.write_flip_log(BufWriter::new(fs::File::create(args.out.join("flips.tsv"))?))?;
    let diagnostics = args.diagnostics.then(|| args.out.join("diagnostics"));
    let run = train_with_diagnostics(&graph, &noisy.labels, &cfg, diagnostics.as_deref())?;
    fs::write(args.out.join("log.csv"), run.log_csv())?;
    run.params
        .write_checkpoint(BufWriter::new(fs::File::create(args.out.join("params.txt"))?))?;
    fs::write(
        args.out.join("config.toml"),
        toml::to_string(&cfg).map_err(|e| unionnet::Error::Config(e.to_string()))?,
    )?;
    println!(
        "{} on {} ({} {}): best epoch {}, val {:.4}, test {:.4}, {:.1?}",
        cfg.method,
        graph.name(),
        args.noise,
        args.rate,
        run.best_epoch,
        run.val_f1,
        run.test_f1,
        run.wall_time
    );
    Ok(())
}

fn run(cli: Cli) -> unionnet::Result<bool> {
    match cli.command {
        Command::Prepare(args) => prepare(args).map(|_| true),
        Command::Train(args) => train_one(args).map(|_| true),
        Command::Grid { spec, out } => {
            let mut spec = ExperimentSpec::from_file(spec)?;
            if let Some(out) = out {
                spec.out = out;
            }
            let table = run_experiment(&spec)?;
            print!("{}", table.to_text());
            Ok(!table.any_failed())
        }
        Command::Sweep {
            spec,
            param,
            values,
            out,
        } => {
            let mut spec = ExperimentSpec::from_file(spec)?;
            if let Some(out) = out {
                spec.out = out;
            }
            let points = run_sweep(&spec, param, &values)?;
            println!("{param}\tmean_f1\tstd_f1");
            for p in &points {
                println!("{}\t{:.4}\t{:.4}", p.value, p.mean_f1, p.std_f1);
            }
            let skipped = points.len() < values.len();
            Ok(!skipped && points.iter().all(|p| p.failed == 0))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
