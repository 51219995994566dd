//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a command fails at runtime, 2 for usage
//! and configuration errors. `MVC_SEED` overrides the configured run seed;
//! an explicit `--seed` overrides both.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::sampler::GapMode;
use crate::synthdata::{self, StyleKind, SynthConfig, TransferStyle};
use crate::trainer::{self, report, Data, ExperimentConfig, MetricsReport, Mode};

pub const SEED_ENV: &str = "MVC_SEED";

#[derive(Debug, Parser)]
#[command(name = "mvc", version, about = "Contrastive learning on multi-view object videos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic video dataset and its manifest.
    GenData(GenDataArgs),
    /// Train and evaluate one configuration.
    Run(RunArgs),
    /// Transform runs over the gap grid of a frame rate.
    Sweep(SweepArgs),
    /// Aggregate run summaries into a mean/std table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    FullShape,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Generator config (JSON); fields left out take the preset's values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long)]
    pub out: PathBuf,
    /// Render a transfer set with this style instead: recolor, background or blur.
    #[arg(long)]
    pub transfer: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub strength: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "fixed")]
    pub gap_mode: String,
    /// Frame rate of the dataset; 3 restricts training to rotation videos.
    #[arg(long)]
    pub fps: f64,
    /// Run up to this many sweep entries at once.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Seeds to sweep; defaults to the config's seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, or directories holding run directories.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Where to write the aggregate CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG charts next to the CSV.
    #[arg(long)]
    pub plot: bool,
}

/// Whether an error is the caller's fault (exit 2) rather than a runtime failure.
pub fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::Json(_) | Error::Unknown { .. } | Error::Fraction(_) | Error::UnsupportedFps(_)
    )
}

pub fn exit_code(result: &Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_usage_error(e) => ExitCode::from(2),
        Err(_) => ExitCode::from(1),
    }
}

/// Parse `args` (program name first) and execute. Parse failures exit
/// through clap with status 2.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = execute(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a).map(|m| println!("{}", m.display())),
        Command::Run(a) => run(a).map(|dir| println!("{}", dir.display())),
        Command::Sweep(a) => sweep(a).map(|csv| println!("{}", csv.display())),
        Command::Report(a) => report(a),
    }
}

fn synth_config(args: &GenDataArgs) -> Result<SynthConfig> {
    let base = match args.preset {
        Preset::Desk => SynthConfig::desk(),
        Preset::FullShape => SynthConfig::full_shape(),
    };
    let Some(path) = &args.config else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let overrides: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let mut merged = serde_json::to_value(&base)?;
    match (merged.as_object_mut(), overrides) {
        (Some(m), serde_json::Value::Object(o)) => m.extend(o),
        _ => return Err(Error::Config("generator config must be a JSON object".into())),
    }
    serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))
}

/// Returns the written manifest path.
pub fn gen_data(args: &GenDataArgs) -> Result<PathBuf> {
    let cfg = synth_config(args)?;
    cfg.validate()?;
    let style = args
        .transfer
        .as_deref()
        .map(|s| -> Result<TransferStyle> {
            Ok(TransferStyle {
                kind: s.parse::<StyleKind>()?,
                strength: args.strength,
            })
        })
        .transpose()?;
    let manifest = match style {
        Some(style) => synthdata::generate_transfer(&cfg, style, &args.out)?,
        None => synthdata::generate(&cfg, &args.out)?,
    };
    log::info!("{} videos, {} frames", manifest.num_videos(), manifest.len());
    Ok(args.out.join("manifest.jsonl"))
}

/// Run seed: `--seed`, then `MVC_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        None => Ok(config),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    // relative dataset and output paths are taken from the config's directory
    let base = path.parent().unwrap_or(Path::new(""));
    cfg.data.manifest = base.join(&cfg.data.manifest);
    cfg.data.transfer_manifest = cfg.data.transfer_manifest.map(|p| base.join(p));
    cfg.report.out_dir = base.join(&cfg.report.out_dir);
    Ok(cfg)
}

/// Train, evaluate and save one run. Returns its directory.
pub fn run(args: &RunArgs) -> Result<PathBuf> {
    let mut cfg = load_config(&args.config)?;
    if let Some(m) = &args.mode {
        cfg = cfg.with_mode(m.parse::<Mode>()?);
    }
    let env = std::env::var(SEED_ENV).ok();
    cfg = cfg.with_seed(resolve_seed(args.seed, env.as_deref(), cfg.train.seed)?);
    cfg.validate()?;
    let data = Data::load(&cfg.data)?;
    let out = trainer::run(&cfg, &data)?;
    let files = trainer::save_run(&cfg, &out)?;
    if let Some(path) = &cfg.data.transfer_manifest {
        let transfer = Data::load_path(path, &cfg.data)?;
        let report = trainer::transfer_report(&out.store, &cfg, &transfer)?;
        save_report(&cfg.report.out_dir.join(&report.run_id), &report)?;
    }
    println!("test accuracy {:.4}", out.report.test_accuracy);
    Ok(files.dir)
}

fn save_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("metrics.csv");
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    report::write_summary(report, &dir.join("summary.json"))
}

/// Sweep every gap for every seed; returns the combined CSV path.
pub fn sweep(args: &SweepArgs) -> Result<PathBuf> {
    let mut cfg = load_config(&args.config)?;
    let mode: GapMode = args.gap_mode.parse()?;
    let grid = crate::sampler::gap_grid(args.fps)?;
    if args.fps == 3.0 {
        cfg.data.rotation_only = true;
    }
    if args.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    cfg = cfg.with_mode(Mode::SimclrTransform);
    cfg.validate()?;
    let data = Data::load(&cfg.data)?;
    if (data.fps() - args.fps).abs() > 1e-6 {
        return Err(Error::Config(format!("--fps {} but the dataset runs at {} fps", args.fps, data.fps())));
    }
    let seeds = if args.seeds.is_empty() { cfg.train.seeds.clone() } else { args.seeds.clone() };
    let jobs: Vec<ExperimentConfig> = seeds
        .iter()
        .flat_map(|&s| grid.iter().map(move |&g| (s, g)))
        .map(|(s, g)| cfg.with_seed(s).with_gap(mode, g))
        .collect();

    let results = run_jobs(&jobs, &data, args.jobs);
    let mut reports = Vec::new();
    let mut failed = 0;
    for (job, result) in jobs.iter().zip(results) {
        let gap = job.sampler.gap.map_or(0.0, |g| g.seconds);
        match result.and_then(|out| trainer::save_run(job, &out).map(|_| out.report)) {
            Ok(r) => reports.push(r),
            Err(e) => {
                failed += 1;
                eprintln!("seed {} gap {gap}: {e}", job.train.seed);
            }
        }
    }
    fs::create_dir_all(&cfg.report.out_dir).map_err(|e| Error::io(&cfg.report.out_dir, e))?;
    let path = cfg.report.out_dir.join(format!("sweep-{}-fps{}.csv", args.gap_mode, args.fps));
    fs::write(&path, report::combined_csv(&reports)).map_err(|e| Error::io(&path, e))?;
    if failed > 0 && reports.is_empty() {
        return Err(Error::Config(format!("all {failed} sweep runs failed")));
    }
    Ok(path)
}

/// Run configs on up to `workers` threads; results keep the input order.
/// Each job's randomness derives from its own seed, so the result does not
/// depend on scheduling.
fn run_jobs(jobs: &[ExperimentConfig], data: &Data, workers: usize) -> Vec<Result<trainer::RunOutput>> {
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<trainer::RunOutput>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = trainer::run(job, data);
                *slots[i].lock().expect("no poisoned slots") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("no poisoned slots").expect("every job ran"))
        .collect()
}

/// Summaries found at or directly under each path, with the paths that
/// could not be read.
pub fn collect_summaries(paths: &[PathBuf]) -> (Vec<MetricsReport>, Vec<(PathBuf, String)>) {
    let mut found = Vec::new();
    for p in paths {
        let direct = p.join("summary.json");
        if direct.exists() || !p.is_dir() {
            found.push(direct);
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(p)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path().join("summary.json"))
            .filter(|s| s.exists())
            .collect();
        children.sort();
        if children.is_empty() {
            found.push(direct);
        }
        found.extend(children);
    }
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for path in found {
        match report::read_summary(&path) {
            Ok(r) => reports.push(r),
            Err(e) => skipped.push((path, e.to_string())),
        }
    }
    (reports, skipped)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let (reports, skipped) = collect_summaries(&args.runs);
    for (path, why) in &skipped {
        eprintln!("skipped {}: {why}", path.display());
    }
    if reports.is_empty() {
        return Err(Error::Config("no readable run summaries".into()));
    }
    let rows = report::aggregate(&reports);
    let csv = report::aggregate_csv(&rows);
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
            if args.plot {
                let stem = path.with_extension("");
                let bar = stem.with_extension("bars.svg");
                fs::write(&bar, report::bar_chart_svg(&rows)).map_err(|e| Error::io(&bar, e))?;
                if rows.iter().any(|r| r.gap.is_some()) {
                    let gaps = stem.with_extension("gaps.svg");
                    fs::write(&gaps, report::gap_chart_svg(&rows)).map_err(|e| Error::io(&gaps, e))?;
                }
            }
        }
        None if args.plot => return Err(Error::Config("--plot needs --out".into())),
        None => print!("{csv}"),
    }
    Ok(())
}
