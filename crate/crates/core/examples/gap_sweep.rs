//! Transform-mode runs over the gap grid, restricted to rotation videos.
//!
//! cargo run --release --example gap_sweep -- [fixed|range] [epochs]

use mvc::sampler::GapMode;
use mvc::synthdata::{generate, SynthConfig};
use mvc::trainer::{run_gap_sweep, Data, ExperimentConfig};

fn main() -> mvc::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: GapMode = args.next().as_deref().unwrap_or("fixed").parse()?;
    let epochs = args.next().map_or(Ok(2), |s| s.parse()).map_err(|e| mvc::Error::Config(format!("{e}")))?;
    let dir = tempfile::tempdir().map_err(|e| mvc::Error::Config(e.to_string()))?;
    let synth = SynthConfig {
        num_classes: 3,
        objects_per_class: 4,
        ..SynthConfig::desk()
    };
    generate(&synth, dir.path())?;

    let mut cfg = ExperimentConfig::default();
    cfg.data.manifest = dir.path().join("manifest.jsonl");
    cfg.data.holdout_objects_per_class = 1;
    cfg.data.rotation_only = true;
    cfg.train.pretrain_epochs = epochs;
    let data = Data::load(&cfg.data)?;
    for result in run_gap_sweep(&cfg, &data, mode)? {
        match result {
            Ok(out) => {
                let r = out.report;
                let tag = if r.self_equivalent { "  (same as self)" } else { "" };
                println!("gap {:>5.2}s  test accuracy {:.3}{tag}", r.gap.unwrap_or(0.0), r.test_accuracy);
            }
            Err((gap, e)) => println!("gap {gap:>5.2}s  failed: {e}"),
        }
    }
    Ok(())
}
