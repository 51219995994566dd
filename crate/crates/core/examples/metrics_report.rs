//! Multi-seed runs saved to disk, then aggregated into a mean/std table and
//! SVG charts.
//!
//! cargo run --release --example metrics_report -- [out_dir]

use std::path::PathBuf;

use mvc::synthdata::{generate, SynthConfig};
use mvc::trainer::report::{aggregate, aggregate_csv, bar_chart_svg, read_summary};
use mvc::trainer::{run, save_run, Data, ExperimentConfig, Mode};

fn main() -> mvc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mvc-report"));
    let synth = SynthConfig {
        num_classes: 3,
        objects_per_class: 3,
        duration: 6.0,
        ..SynthConfig::desk()
    };
    generate(&synth, &out.join("data"))?;

    let mut cfg = ExperimentConfig::default();
    cfg.data.manifest = out.join("data/manifest.jsonl");
    cfg.data.holdout_objects_per_class = 1;
    cfg.data.eval_fraction = 0.5;
    cfg.train.pretrain_epochs = 2;
    cfg.report.out_dir = out.join("runs");
    let data = Data::load(&cfg.data)?;

    let mut summaries = Vec::new();
    for mode in [Mode::SimclrSelf, Mode::SimclrTransform] {
        for seed in [0, 1] {
            let c = cfg.with_mode(mode).with_seed(seed);
            let files = save_run(&c, &run(&c, &data)?)?;
            summaries.push(read_summary(&files.summary)?);
            println!("wrote {}", files.dir.display());
        }
    }
    let rows = aggregate(&summaries);
    print!("{}", aggregate_csv(&rows));
    let svg = out.join("accuracy.svg");
    std::fs::write(&svg, bar_chart_svg(&rows)).map_err(|e| mvc::Error::Config(e.to_string()))?;
    println!("chart: {}", svg.display());
    Ok(())
}
