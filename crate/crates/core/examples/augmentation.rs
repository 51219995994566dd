//! Two augmented views of one object crop, written as PPM files.
//!
//! cargo run --release --example augmentation -- [out_dir]

use std::path::PathBuf;

use mvc::augment::{apply, eval_transform, AugmentConfig};
use mvc::dataio::{extract_square, read_image, write_image};
use mvc::synthdata::{generate, SynthConfig};

fn main() -> mvc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mvc-views"));
    let data = tempfile::tempdir().map_err(|e| mvc::Error::Config(e.to_string()))?;
    let cfg = SynthConfig {
        num_classes: 2,
        objects_per_class: 2,
        duration: 2.0,
        ..SynthConfig::desk()
    };
    let manifest = generate(&cfg, data.path())?;
    let frame = read_image(&manifest.image_path(0))?;
    let crop = extract_square(&frame, manifest.record(0).bbox)?;

    std::fs::create_dir_all(&out).map_err(|e| mvc::Error::Config(e.to_string()))?;
    let aug = AugmentConfig::default();
    let mut rng = mvc::rng::seeded(11);
    write_image(&eval_transform(&crop, aug.output_size), &out.join("eval.ppm"))?;
    for k in 0..2 {
        write_image(&apply(&crop, &aug, &mut rng)?, &out.join(format!("view{k}.ppm")))?;
    }
    println!("frame {}x{}, crop {}x{}, views written to {}", frame.width, frame.height, crop.width, crop.height, out.display());
    Ok(())
}
