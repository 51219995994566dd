//! Positive pairs under each pairing setting, drawn from a generated dataset.
//!
//! cargo run --release --example pair_sampling

use mvc::sampler::{gap_grid, pair_anchors, shuffled_anchors, GapMode, GapSpec, PairingPolicy, Setting};
use mvc::synthdata::{generate, SynthConfig};

fn main() -> mvc::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| mvc::Error::Config(e.to_string()))?;
    let cfg = SynthConfig {
        num_classes: 3,
        objects_per_class: 2,
        image_size: 16,
        ..SynthConfig::desk()
    };
    let manifest = generate(&cfg, dir.path())?;
    let fps = manifest.fps();
    println!("gap grid at {fps} fps: {:?}", gap_grid(fps)?);

    let settings = [
        ("self", Setting::SelfFrame),
        ("transform", Setting::Transform { gap: None }),
        ("transform fixed 2s", Setting::Transform { gap: Some(GapSpec::new(GapMode::Fixed, 2.0, fps)?) }),
        ("transform range 1s", Setting::Transform { gap: Some(GapSpec::new(GapMode::Range, 1.0, fps)?) }),
        ("object", Setting::Object),
        ("class", Setting::Class),
    ];
    for (name, setting) in settings {
        let policy = PairingPolicy::new(setting);
        let mut rng = mvc::rng::seeded(3);
        let anchors: Vec<usize> = shuffled_anchors(&manifest, &policy, &mut rng).into_iter().take(4).collect();
        let pairs = pair_anchors(&manifest, &policy, &anchors, &mut rng)?;
        println!("{name}:");
        for (a, p) in pairs {
            let (ra, rp) = (manifest.record(a), manifest.record(p));
            println!(
                "  class {} object {:>2} video {:>2} t {:>5.2}  <->  object {:>2} video {:>2} t {:>5.2}",
                ra.class_id, ra.object_id, ra.video_id, ra.t, rp.object_id, rp.video_id, rp.t
            );
        }
    }
    Ok(())
}
