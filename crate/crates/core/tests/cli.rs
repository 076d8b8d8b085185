use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn unionnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unionnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_bundle(dir: &Path) {
    let dir = dir.to_str().unwrap();
    ok(&unionnet(&[
        "prepare",
        "--out",
        dir,
        "--nodes-per-block",
        "60",
        "--val-size",
        "40",
        "--test-size",
        "90",
    ]));
}

fn spec(dir: &Path, bundle: &Path, methods: &str) -> std::path::PathBuf {
    let path = dir.join("spec.toml");
    fs::write(
        &path,
        format!(
            "out = {:?}\nmethods = [{methods}]\nseeds = [0, 1]\n\n[dataset]\nbundle = {:?}\n\n\
             [[noise]]\ntype = \"symmetric\"\nrate = 0.3\n\n[train]\nepochs = 60\npretrain_epochs = 10\n",
            dir.join("runs"),
            bundle
        ),
    )
    .unwrap();
    path
}

#[test]
fn prepare_then_validate_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    small_bundle(&bundle);
    let line = ok(&unionnet(&["prepare", "--validate", bundle.to_str().unwrap()]));
    assert!(line.contains("n=180 d=16 m=3"), "{line}");
    assert!(line.contains("train=9 val=40 test=90"), "{line}");
}

#[test]
fn validate_names_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    small_bundle(&bundle);
    fs::remove_file(bundle.join("labels.tsv")).unwrap();
    let out = unionnet(&["prepare", "--validate", bundle.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("labels.tsv"));
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    small_bundle(&bundle);
    let run = dir.path().join("run");
    let stdout = ok(&unionnet(&[
        "train",
        "--data",
        bundle.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--noise",
        "pairflip",
        "--rate",
        "0.2",
        "--epochs",
        "30",
        "--pretrain-epochs",
        "5",
        "--patience",
        "0",
        "--diagnostics",
    ]));
    assert!(stdout.starts_with("unionnet on sbm-3x60 (pairflip 0.2)"), "{stdout}");
    let log = fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 31);
    let cfg = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(cfg.contains("epochs = 30"));
    assert!(!cfg.contains("patience"), "disabled patience is omitted: {cfg}");
    assert!(run.join("params.txt").exists());
    assert!(fs::read_to_string(run.join("flips.tsv")).unwrap().lines().count() > 1);
    // One diagnostics file per robust epoch.
    assert_eq!(fs::read_dir(run.join("diagnostics")).unwrap().count(), 25);
}

#[test]
fn train_rejects_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    small_bundle(&bundle);
    let out = unionnet(&[
        "train",
        "--data",
        bundle.to_str().unwrap(),
        "--out",
        dir.path().join("r").to_str().unwrap(),
        "--alpha",
        "1.5",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));
}

#[test]
fn grid_prints_table_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    small_bundle(&bundle);
    let spec = spec(dir.path(), &bundle, "\"gcn_ce\", \"unionnet\"");
    let first = ok(&unionnet(&["grid", spec.to_str().unwrap()]));
    assert_eq!(first.lines().count(), 3, "{first}");
    assert!(first.lines().nth(1).unwrap().starts_with("sbm-3x60"));
    let csv = fs::read_to_string(dir.path().join("runs/results.csv")).unwrap();
    let second = ok(&unionnet(&["grid", spec.to_str().unwrap()]));
    assert_eq!(first, second);
    assert_eq!(csv, fs::read_to_string(dir.path().join("runs/results.csv")).unwrap());
}

#[test]
fn sweep_exit_code_reflects_skipped_values() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    small_bundle(&bundle);
    let spec = spec(dir.path(), &bundle, "\"unionnet\"");
    let spec = spec.to_str().unwrap();
    let stdout = ok(&unionnet(&["sweep", spec, "--param", "beta", "--values", "0,1"]));
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    assert!(dir.path().join("runs/sweep_beta.csv").exists());
    let out = unionnet(&["sweep", spec, "--param", "alpha", "--values", "0.5,2"]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = unionnet(&["train", "--data", "x", "--out", "y", "--method", "mlp"]);
    assert_eq!(out.status.code(), Some(2));
}
