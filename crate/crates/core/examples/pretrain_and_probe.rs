//! Contrastive pretraining followed by a linear probe on held-out objects,
//! for every training mode, on a small generated dataset.
//!
//! cargo run --release --example pretrain_and_probe -- [epochs]

use mvc::synthdata::{generate, SynthConfig};
use mvc::trainer::{run, Data, ExperimentConfig, Mode};

fn main() -> mvc::Result<()> {
    let epochs = std::env::args().nth(1).map_or(Ok(3), |s| s.parse()).map_err(|e| mvc::Error::Config(format!("{e}")))?;
    let dir = tempfile::tempdir().map_err(|e| mvc::Error::Config(e.to_string()))?;
    let synth = SynthConfig {
        num_classes: 4,
        objects_per_class: 4,
        ..SynthConfig::desk()
    };
    generate(&synth, dir.path())?;

    let mut cfg = ExperimentConfig::default();
    cfg.data.manifest = dir.path().join("manifest.jsonl");
    cfg.data.holdout_objects_per_class = 1;
    cfg.data.eval_fraction = 0.25;
    cfg.train.pretrain_epochs = epochs;
    let data = Data::load(&cfg.data)?;
    println!("{} train frames, {} held-out frames, chance {:.3}", data.train.manifest.len(), data.test.manifest.len(), 1.0 / data.num_classes() as f64);

    for mode in Mode::ALL {
        let out = run(&cfg.with_mode(mode), &data)?;
        let r = &out.report;
        let first = r.pretrain_loss.first().copied().unwrap_or(f64::NAN);
        let last = r.pretrain_loss.last().copied().unwrap_or(f64::NAN);
        println!(
            "{:<17} loss {first:.3} -> {last:.3}   test accuracy {:.3}   ({:.1}s)",
            mode.to_string(),
            r.test_accuracy,
            r.wall_time_secs
        );
    }
    Ok(())
}
