//! Render a small synthetic video dataset and a recolored transfer copy.
//!
//! cargo run --release --example generate_dataset -- [out_dir]

use std::path::PathBuf;

use mvc::synthdata::{generate, generate_transfer, StyleKind, SynthConfig, TransferStyle};

fn main() -> mvc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mvc-demo-data"));
    let cfg = SynthConfig {
        num_classes: 4,
        objects_per_class: 3,
        duration: 4.0,
        ..SynthConfig::desk()
    };
    let source = generate(&cfg, &out.join("source"))?;
    let recolor = generate_transfer(&cfg, TransferStyle::new(StyleKind::Recolor), &out.join("recolor"))?;
    println!("{}: {} videos, {} frames at {} fps", out.join("source").display(), source.num_videos(), source.len(), source.fps());
    println!("{}: {} videos, object ids from {}", out.join("recolor").display(), recolor.num_videos(), recolor.record(0).object_id);
    println!("rotation speed {:.1} deg/s; a 1 s gap turns the object {:.1} deg", cfg.angular_velocity(), cfg.angle_for_gap(1.0));
    Ok(())
}
