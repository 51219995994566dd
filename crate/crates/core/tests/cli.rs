use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvc::dataio::load_manifest;
use mvc::sampler::gap_grid;
use mvc::trainer::report::read_summary;

fn mvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvc"))
        .args(args)
        .env_remove("MVC_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Tiny dataset plus an experiment config that trains in well under a second.
fn setup(dir: &Path, extra: &str) -> PathBuf {
    let gen = dir.join("gen.json");
    fs::write(
        &gen,
        r#"{"num_classes": 3, "objects_per_class": 3, "rotations_per_object": 1, "fps": 1.0,
            "duration": 12.0, "image_size": 24, "occluder": false, "image_format": "mvim", "seed": 3}"#,
    )
    .unwrap();
    let out = mvc(&["gen-data", "--config", s(&gen), "--out", s(&dir.join("data"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = dir.join("exp.json");
    fs::write(
        &cfg,
        format!(
            r#"{{
  "data": {{"manifest": "data/manifest.jsonl", "holdout_objects_per_class": 1, "eval_fraction": 0.5}},
  "model": {{"backbone": {{"stages": [{{"out_channels": 4, "kernel": 3, "stride": 2}},
                                    {{"out_channels": 8, "kernel": 3, "stride": 2}}], "input_size": 16}},
            "projection": {{"hidden_dim": 8, "out_dim": 4}}}},
  "augment": {{"output_size": [16, 16]}},
  "train": {{"batch_pairs": 4, "pretrain_epochs": 1, "eval_epochs": 3, "eval_batch": 8, "seeds": [0, 1]{extra}}},
  "report": {{"out_dir": "runs"}}
}}"#
        ),
    )
    .unwrap();
    cfg
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    PathBuf::from(stdout.lines().last().unwrap())
}

#[test]
fn paper_sized_generation_has_2520_videos_and_creates_the_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("shape.json");
    fs::write(&cfg, r#"{"duration": 1.0, "image_size": 8, "image_format": "mvim"}"#).unwrap();
    let out_dir = dir.path().join("nested/not/yet/there");
    let out = mvc(&["gen-data", "--preset", "full-shape", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = load_manifest(&out_dir.join("manifest.jsonl")).unwrap();
    assert_eq!(m.num_videos(), 2520);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvc(&["gen-data", "--out", s(dir.path()), "--transfer", "sparkle"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&mvc(&["report"])), 2);
    assert_eq!(code(&mvc(&["frobnicate"])), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"epochz": 3}}"#).unwrap();
    assert_eq!(code(&mvc(&["run", "--config", s(&bad)])), 2);
    let cfg = setup(dir.path(), "");
    assert_eq!(code(&mvc(&["run", "--config", s(&cfg), "--mode", "simclr_moon"])), 2);
    assert_eq!(code(&mvc(&["sweep", "--config", s(&cfg), "--fps", "2"])), 2);
    // the dataset runs at 1 fps
    assert_eq!(code(&mvc(&["sweep", "--config", s(&cfg), "--fps", "3"])), 2);
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(&cfg, r#"{"data": {"manifest": "nowhere/manifest.jsonl"}}"#).unwrap();
    assert_eq!(code(&mvc(&["run", "--config", s(&cfg)])), 1);
}

#[test]
fn repeated_runs_write_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let a = mvc(&["run", "--config", s(&cfg), "--mode", "simclr_self", "--seed", "4"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let dir_a = run_dir(&a);
    let first = fs::read(dir_a.join("metrics.csv")).unwrap();
    fs::remove_dir_all(&dir_a).unwrap();
    let b = mvc(&["run", "--config", s(&cfg), "--mode", "simclr_self", "--seed", "4"]);
    assert_eq!(run_dir(&b), dir_a);
    assert_eq!(fs::read(dir_a.join("metrics.csv")).unwrap(), first);

    let summary = read_summary(&dir_a.join("summary.json")).unwrap();
    assert_eq!(summary.mode.to_string(), "simclr_self");
    assert_eq!(summary.seed, 4);
    let name = dir_a.file_name().unwrap().to_str().unwrap();
    assert!(name.contains(&summary.config_fingerprint[..12]) && name.ends_with("s4"), "{name}");
    for f in ["config.json", "checkpoint.mvck"] {
        assert!(dir_a.join(f).exists(), "{f}");
    }
}

#[test]
fn seed_comes_from_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), r#", "seed": 7"#);
    let seed_of = |out: Output| {
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        read_summary(&run_dir(&out).join("summary.json")).unwrap().seed
    };
    assert_eq!(seed_of(mvc(&["run", "--config", s(&cfg)])), 7);
    let with_env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_mvc"))
            .args(args)
            .env("MVC_SEED", "11")
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    };
    assert_eq!(seed_of(with_env(&["run", "--config", s(&cfg)])), 11);
    assert_eq!(seed_of(with_env(&["run", "--config", s(&cfg), "--seed", "2"])), 2);
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = mvc(&["sweep", "--config", s(&cfg), "--fps", "1", "--jobs", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(run_dir(&out)).unwrap();
    let acc: Vec<Vec<&str>> = csv
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|c| c[5] == "test" && c[6] == "accuracy")
        .collect();
    // 6 gaps for each of the 2 configured seeds
    assert_eq!(acc.len(), 12);
    let grid: Vec<String> = gap_grid(1.0).unwrap().iter().map(|g| g.to_string()).collect();
    for seed in ["0", "1"] {
        let gaps: Vec<String> = acc.iter().filter(|c| c[3] == seed).map(|c| c[2].to_string()).collect();
        assert_eq!(gaps, grid);
    }

    let runs = dir.path().join("runs");
    fs::create_dir_all(runs.join("broken")).unwrap();
    fs::write(runs.join("broken/summary.json"), "{not json").unwrap();
    let table = dir.path().join("table.csv");
    let out = mvc(&["report", "--runs", s(&runs), "--out", s(&table), "--plot"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
    let rows: Vec<Vec<String>> = fs::read_to_string(&table)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[3], "2");
        let std: f64 = r[5].parse().unwrap();
        assert!(std.is_finite() && std >= 0.0);
    }
    assert!(dir.path().join("table.bars.svg").exists());
    assert!(dir.path().join("table.gaps.svg").exists());

    let one = mvc(&["report", "--runs", s(&runs.join(fs::read_dir(&runs).unwrap().flatten().find(|e| e.path().join("config.json").exists()).unwrap().file_name()))]);
    let text = String::from_utf8_lossy(&one.stdout);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[3], row[5]), ("1", "0"));
}
