//! Load a manifest, split it by object and cut square crops around the boxes.
//!
//! cargo run --release --example manifest_and_crops

use mvc::dataio::{interpolate_bbox, load_manifest, sample_eval_subset, split_objects, square_crop, BBox, SplitSpec};
use mvc::synthdata::{generate, SynthConfig};

fn main() -> mvc::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| mvc::Error::Config(e.to_string()))?;
    let cfg = SynthConfig {
        num_classes: 3,
        objects_per_class: 4,
        image_size: 24,
        ..SynthConfig::desk()
    };
    generate(&cfg, dir.path())?;
    let manifest = load_manifest(&dir.path().join("manifest.jsonl"))?;
    println!("{} frames, {} videos, {} objects", manifest.len(), manifest.num_videos(), manifest.num_objects());

    let (train, test) = split_objects(&manifest, SplitSpec { holdout_objects_per_class: 1, seed: 0 })?;
    println!("train objects {:?}", train.object_keys());
    println!("test objects  {:?}", test.object_keys());
    let probe = sample_eval_subset(&train, 0.1, 0)?;
    println!("probe subset: {} of {} training frames", probe.len(), train.len());

    let b = manifest.record(0).bbox;
    let sq = square_crop(b, 24, 24)?;
    println!("box {:?} -> square {:?}", b, sq.bbox);
    let wide = square_crop(BBox::new(20.0, 2.0, 4.0, 30.0), 24, 24)?;
    println!("oversized box -> {:?} (degraded: {})", wide.bbox, wide.degraded);
    let mid = interpolate_bbox(BBox::new(0.0, 0.0, 10.0, 10.0), 0.0, BBox::new(10.0, 0.0, 20.0, 10.0), 2.0, 1.0)?;
    println!("halfway box {mid:?}");
    Ok(())
}
