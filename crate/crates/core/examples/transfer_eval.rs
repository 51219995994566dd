//! Pretrain on one dataset, then linearly evaluate the frozen backbone on a
//! recolored set of new objects.
//!
//! cargo run --release --example transfer_eval -- [epochs]

use mvc::synthdata::{generate, generate_transfer, StyleKind, SynthConfig, TransferStyle};
use mvc::trainer::{linear_eval, pretrain, transfer_eval, Data, ExperimentConfig, Mode};

fn main() -> mvc::Result<()> {
    let epochs = std::env::args().nth(1).map_or(Ok(3), |s| s.parse()).map_err(|e| mvc::Error::Config(format!("{e}")))?;
    let dir = tempfile::tempdir().map_err(|e| mvc::Error::Config(e.to_string()))?;
    let synth = SynthConfig {
        num_classes: 4,
        objects_per_class: 4,
        ..SynthConfig::desk()
    };
    generate(&synth, &dir.path().join("source"))?;
    generate_transfer(&synth, TransferStyle::new(StyleKind::Recolor), &dir.path().join("recolor"))?;

    let mut cfg = ExperimentConfig::default();
    cfg.data.manifest = dir.path().join("source/manifest.jsonl");
    cfg.data.holdout_objects_per_class = 1;
    cfg.data.eval_fraction = 0.25;
    cfg.train.pretrain_epochs = epochs;
    let source = Data::load(&cfg.data)?;
    let recolor = Data::load_path(&dir.path().join("recolor/manifest.jsonl"), &cfg.data)?;

    for mode in [Mode::SimclrSelf, Mode::SimclrTransform] {
        let cfg = cfg.with_mode(mode);
        let trained = pretrain(&cfg, &source)?;
        let own = linear_eval(&trained.store, &cfg, &source)?;
        let moved = transfer_eval(&trained.store, &cfg, &recolor)?;
        println!("{:<17} source {:.3}   recolor transfer {:.3}", mode.to_string(), own.test_accuracy, moved.test_accuracy);
    }
    Ok(())
}
