//! End-to-end acceptance suite. Each criterion prints one PASS or FAIL line;
//! the test fails if any criterion fails.
//!
//! Criteria 6 to 10 train on the desk dataset and take tens of minutes on a
//! single core.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use mvc::contrastive::{ntxent_batch_loss, ntxent_on, EmbeddingBatch};
use mvc::dataio::{self, interpolate_bbox, square_crop, BBox, FrameRecord, Manifest, SplitSpec, VideoKind};
use mvc::model::{self, BackboneSpec, ConvStage, ProjectionSpec};
use mvc::numcore::{self, Array, Tape};
use mvc::rng;
use mvc::sampler::{self, GapMode, GapSpec, PairingPolicy, Setting};
use mvc::synthdata::{self, StyleKind, SynthConfig, TransferStyle};
use mvc::trainer::{self, Data, ExperimentConfig, Mode};

/// Seeds shared by every multi-seed criterion.
const SEEDS: [u64; 3] = [0, 1, 2];

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

/// Cosine similarities and the pair loss written out from their definitions.
fn oracle_ntxent(z: &[Vec<f64>], tau: f64) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let n2 = z.len();
    let mut total = 0.0;
    for i in 0..n2 {
        let j = if i % 2 == 0 { i + 1 } else { i - 1 };
        let mut den = 0.0;
        for k in 0..n2 {
            if k != i {
                den += (cos(&z[i], &z[k]) / tau).exp();
            }
        }
        total += -((cos(&z[i], &z[j]) / tau).exp() / den).ln();
    }
    total / n2 as f64
}

fn loss_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = r.random_range(1..=8);
        let d = r.random_range(2..=16);
        let tau = [0.1, 0.5, 1.0][trial % 3];
        let rows: Vec<Vec<f64>> = (0..2 * n)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let z = Array::from_rows(&rows).map_err(|e| e.to_string())?;
        let ours = ntxent_batch_loss(&EmbeddingBatch::new(z, tau).map_err(|e| e.to_string())?);
        worst = worst.max((ours - oracle_ntxent(&rows, tau)).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-10, format!("max abs difference {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("max abs difference {worst:.1e} over 100 batches in {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 2

fn gradient_suite() -> Check {
    let start = Instant::now();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut models = 0u64;
    let mut skipped = 0;
    let mut m = 0u64;
    while models < 20 {
        m += 1;
        let mut r = rng::seeded(200 + m);
        let spec = BackboneSpec {
            stages: vec![
                ConvStage {
                    out_channels: r.random_range(2..=3),
                    kernel: 3,
                    stride: 1,
                },
                // smallest valid feature width
                ConvStage {
                    out_channels: r.random_range(8..=9),
                    kernel: 3,
                    stride: 2,
                },
            ],
            input_size: 6,
            batch_norm: m % 4 == 3,
        };
        let proj = ProjectionSpec {
            hidden_dim: r.random_range(3..=5),
            out_dim: r.random_range(2..=4),
        };
        let pairs = r.random_range(1..=3);
        let tau = [0.1, 0.5, 1.0][m as usize % 3];
        let store = model::init_model(&spec, &proj, 300 + m).map_err(|e| e.to_string())?;
        let images = Array::new(
            vec![2 * pairs, 3, 6, 6],
            (0..2 * pairs * 108).map(|_| r.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let loss = |store: &numcore::ParamStore| -> Result<(Tape, numcore::Var), String> {
            let mut t = Tape::new();
            let x = t.input(images.clone());
            let f = model::embed_on(&mut t, store, &spec, x).map_err(|e| e.to_string())?;
            let z = model::project_on(&mut t, store, f).map_err(|e| e.to_string())?;
            let l = ntxent_on(&mut t, z, tau).map_err(|e| e.to_string())?;
            Ok((t, l))
        };
        // A zero projection has no direction to normalize. A model that maps
        // every image to the same embedding sits at a constant loss with
        // all-zero gradients, which checks nothing. Both are redrawn.
        let Ok((t, l)) = loss(&store) else {
            skipped += 1;
            continue;
        };
        let collapsed = {
            let mut t = Tape::new();
            let x = t.input(images.clone());
            let f = model::embed_on(&mut t, &store, &spec, x).map_err(|e| e.to_string())?;
            let z = model::project_on(&mut t, &store, f).map_err(|e| e.to_string())?;
            let z = t.value(z);
            (1..z.shape()[0]).all(|i| z.row(i).iter().zip(z.row(0)).all(|(a, b)| (a - b).abs() < 1e-9))
        };
        if collapsed {
            skipped += 1;
            continue;
        }
        models += 1;
        let mut analytic = store.clone();
        numcore::backward(&t, l, &mut analytic).map_err(|e| e.to_string())?;
        let names: Vec<String> = store.names().map(String::from).collect();
        for name in names {
            let grad = analytic.get(&name).unwrap().grad.clone();
            for i in 0..grad.len() {
                let mut probe = store.clone();
                let base = probe.value(&name).unwrap().data()[i];
                let mut eval = |v: f64| {
                    probe.get_mut(&name).unwrap().value.data_mut()[i] = v;
                    let (t, l) = loss(&probe)?;
                    Ok::<f64, String>(t.value(l).item())
                };
                let numeric = (eval(base + h)? - eval(base - h)?) / (2.0 * h);
                let a = grad.data()[i];
                // Central differences at h = 1e-6 resolve about 1e-10 on an O(1)
                // loss, so exact zeros (dead ReLU paths) read as +-1e-10. The
                // floor sits well above that; below it the check is absolute 1e-9.
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "20 models ({skipped} degenerate draws redrawn), {checked} coordinates, max relative error {worst:.1e} in {elapsed:.2?}"
    ))
}

// ---------------------------------------------------------------- 3

/// In-memory manifest: 3 classes x 2 objects, one rotation and one
/// hodgepodge video each, 12 frames per video.
fn sampler_manifest(fps: f64) -> Manifest {
    let mut records = Vec::new();
    for class_id in 0..3u32 {
        for k in 0..2u32 {
            let object_id = class_id * 2 + k;
            for v in 0..2u32 {
                let video_id = object_id * 2 + v;
                let kind = if v == 0 { VideoKind::RotationXPos } else { VideoKind::Hodgepodge };
                for f in 0..12 {
                    records.push(FrameRecord {
                        class_id,
                        object_id,
                        video_id,
                        video_kind: kind,
                        t: f as f64 / fps,
                        image: format!("{video_id}/{f}.ppm"),
                        bbox: BBox::new(1.0, 1.0, 4.0, 4.0),
                    });
                }
            }
        }
    }
    Manifest::with_timing(records, Path::new("."), fps, 12.0 / fps).unwrap()
}

/// The pairing rule restated from the setting definitions.
fn valid_pair(policy: &PairingPolicy, fps: f64, a: &FrameRecord, ai: usize, p: &FrameRecord, pi: usize) -> bool {
    if policy.rotation_only && (a.video_kind == VideoKind::Hodgepodge || p.video_kind == VideoKind::Hodgepodge) {
        return false;
    }
    let frames = ((a.t - p.t) * fps).round().abs() as i64;
    match policy.setting {
        Setting::SelfFrame => ai == pi,
        Setting::Transform { gap: None } => a.video_id == p.video_id && ai != pi,
        Setting::Transform { gap: Some(g) } => {
            let k = (g.gap_seconds * fps).round() as i64;
            if k == 0 {
                return ai == pi;
            }
            a.video_id == p.video_id
                && match g.mode {
                    GapMode::Fixed => frames == k,
                    GapMode::Range => frames >= 1 && frames <= k,
                }
        }
        Setting::Object => (a.class_id, a.object_id) == (p.class_id, p.object_id) && ai != pi,
        Setting::Class => a.class_id == p.class_id && ai != pi,
    }
}

fn sampler_suite() -> Check {
    let mut cells = 0;
    let mut worst_p = 1.0f64;
    for fps in [1.0, 3.0] {
        let manifest = sampler_manifest(fps);
        let mut settings = vec![Setting::SelfFrame, Setting::Transform { gap: None }, Setting::Object, Setting::Class];
        for mode in [GapMode::Fixed, GapMode::Range] {
            for gap in sampler::gap_grid(fps).unwrap() {
                settings.push(Setting::Transform {
                    gap: Some(GapSpec::new(mode, gap, fps).unwrap()),
                });
            }
        }
        for setting in settings {
            for rotation_only in [false, true] {
                let policy = PairingPolicy { setting, rotation_only };
                let mut r = rng::derived(7, &[cells as u64]);
                let anchors: Vec<usize> = (0..manifest.len())
                    .filter(|&i| !rotation_only || manifest.record(i).video_kind.is_rotation())
                    .collect();
                let mut fixed_counts: HashMap<usize, usize> = HashMap::new();
                let fixed = anchors[anchors.len() / 2 + 5];
                for draw in 0..10_000 {
                    let a = if draw % 2 == 0 { fixed } else { anchors[r.random_range(0..anchors.len())] };
                    match sampler::sample_partner(&manifest, a, &policy, &mut r) {
                        Ok(p) => {
                            if !valid_pair(&policy, fps, manifest.record(a), a, manifest.record(p), p) {
                                return Err(format!("{policy:?}: invalid pair {a} -> {p}"));
                            }
                            if a == fixed {
                                *fixed_counts.entry(p).or_default() += 1;
                            }
                        }
                        Err(e) => {
                            let has_partner = (0..manifest.len())
                                .any(|p| valid_pair(&policy, fps, manifest.record(a), a, manifest.record(p), p));
                            if has_partner {
                                return Err(format!("{policy:?}: anchor {a} has a valid partner but sampling failed: {e}"));
                            }
                        }
                    }
                }
                // every anchor must have a partner unless the fixed gap runs off both ends
                let valid_for_fixed: Vec<usize> = (0..manifest.len())
                    .filter(|&p| valid_pair(&policy, fps, manifest.record(fixed), fixed, manifest.record(p), p))
                    .collect();
                if valid_for_fixed.is_empty() {
                    ensure(fixed_counts.is_empty(), "partner drawn for an anchor with no valid partner")?;
                } else if valid_for_fixed.len() > 1 {
                    ensure(
                        fixed_counts.keys().all(|p| valid_for_fixed.contains(p)),
                        "fixed anchor partner outside the valid set",
                    )?;
                    let n: usize = fixed_counts.values().sum();
                    let expected = n as f64 / valid_for_fixed.len() as f64;
                    let chi2: f64 = valid_for_fixed
                        .iter()
                        .map(|p| (*fixed_counts.get(p).unwrap_or(&0) as f64 - expected).powi(2) / expected)
                        .sum();
                    let dist = ChiSquared::new((valid_for_fixed.len() - 1) as f64).unwrap();
                    let p_value = 1.0 - dist.cdf(chi2);
                    worst_p = worst_p.min(p_value);
                    ensure(p_value > 0.01, format!("{policy:?}: chi-square p = {p_value}"))?;
                }
                cells += 1;
            }
        }
    }
    Ok(format!("{cells} policy cells x 10^4 draws, 0 violations, smallest chi-square p {worst_p:.3}"))
}

// ---------------------------------------------------------------- 4

fn geometry_suite() -> Check {
    let mut r = rng::seeded(404);
    let mut degraded = 0;
    for _ in 0..100_000 {
        let (iw, ih) = (r.random_range(1..=640) as f64, r.random_range(1..=480) as f64);
        let w = r.random_range(0.5..=iw);
        let h = r.random_range(0.5..=ih);
        let b = BBox::new(r.random_range(0.0..=iw - w), r.random_range(0.0..=ih - h), w, h);
        let sq = square_crop(b, iw as usize, ih as usize).map_err(|e| e.to_string())?;
        let s = sq.bbox;
        ensure(s.w == s.h, format!("not square: {s:?}"))?;
        ensure(s.x >= 0.0 && s.y >= 0.0 && s.right() <= iw && s.bottom() <= ih, format!("out of bounds: {s:?} in {iw}x{ih}"))?;
        if sq.degraded {
            degraded += 1;
            ensure(s.w == iw.min(ih), format!("degraded crop is not maximal: {s:?}"))?;
        } else {
            ensure(
                s.x <= b.x && s.y <= b.y && s.right() >= b.right() && s.bottom() >= b.bottom(),
                format!("{s:?} does not contain {b:?}"),
            )?;
            ensure(s.w == b.w.max(b.h), format!("{s:?} is not the smallest square around {b:?}"))?;
        }
    }
    for _ in 0..10_000 {
        let mut bx = || BBox::new(r.random_range(0.0..100.0), r.random_range(0.0..100.0), r.random_range(1.0..50.0), r.random_range(1.0..50.0));
        let (b1, b2) = (bx(), bx());
        // quarter-second timestamps make the midpoint query exactly representable
        let t1 = r.random_range(0..40) as f64 / 4.0;
        let t2 = t1 + r.random_range(2..20) as f64 / 4.0;
        let end = interpolate_bbox(b1, t1, b2, t2, t2).map_err(|e| e.to_string())?;
        ensure(end == b2, format!("endpoint {end:?} != {b2:?}"))?;
        let mid = interpolate_bbox(b1, t1, b2, t2, t1 + (t2 - t1) / 2.0).map_err(|e| e.to_string())?;
        let want = BBox::new((b1.x + b2.x) / 2.0, (b1.y + b2.y) / 2.0, (b1.w + b2.w) / 2.0, (b1.h + b2.h) / 2.0);
        ensure(mid == want, format!("midpoint {mid:?} != {want:?}"))?;
        ensure(interpolate_bbox(b1, t1, b2, t2, t1).is_err(), "t = t1 must be rejected")?;
    }
    Ok(format!("10^5 random boxes ({degraded} larger than the image), 10^4 interpolation identities"))
}

// ---------------------------------------------------------------- 5

fn counts() -> Check {
    let dir = tempfile::tempdir().unwrap();
    // full class/object/video/frame structure; tiny frames keep it fast
    let cfg = SynthConfig {
        image_size: 8,
        image_format: synthdata::ImageFormat::Mvim,
        ..SynthConfig::full_shape()
    };
    let m = synthdata::generate(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let loaded = dataio::load_manifest(&dir.path().join("manifest.jsonl")).map_err(|e| e.to_string())?;
    ensure(loaded.num_videos() == 2520, format!("{} videos", loaded.num_videos()))?;
    let (train, test) = dataio::split_objects(
        &m,
        SplitSpec {
            holdout_objects_per_class: 3,
            seed: 0,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(train.num_objects() == 324, format!("{} train objects", train.num_objects()))?;
    ensure(test.num_objects() == 36, format!("{} test objects", test.num_objects()))?;
    Ok(format!("2520 videos, {} frames, 324 train / 36 test objects", loaded.len()))
}

// ---------------------------------------------------------------- 6-10

struct Desk {
    _dir: tempfile::TempDir,
    data: Data,
    rotation_data: Data,
    transfer: Data,
    config: ExperimentConfig,
}

fn desk() -> Desk {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig::desk();
    synthdata::generate(&synth, &dir.path().join("desk")).unwrap();
    synthdata::generate_transfer(&synth, TransferStyle::new(StyleKind::Recolor), &dir.path().join("recolor")).unwrap();
    let mut config = ExperimentConfig::default();
    config.data.manifest = dir.path().join("desk/manifest.jsonl");
    config.data.transfer_manifest = Some(dir.path().join("recolor/manifest.jsonl"));
    let data = Data::load(&config.data).unwrap();
    let mut rot = config.data.clone();
    rot.rotation_only = true;
    let rotation_data = Data::load(&rot).unwrap();
    let transfer = Data::load_path(config.data.transfer_manifest.as_ref().unwrap(), &config.data).unwrap();
    Desk {
        _dir: dir,
        data,
        rotation_data,
        transfer,
        config,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn separability(desk: &Desk) -> Check {
    let start = Instant::now();
    let cfg = desk.config.with_mode(Mode::Supervised).with_seed(SEEDS[0]);
    let out = trainer::run(&cfg, &desk.data).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let acc = out.report.test_accuracy;
    ensure(acc > 0.90, format!("supervised held-out accuracy {}", pct(acc)))?;
    ensure(elapsed < Duration::from_secs(15 * 60), format!("took {elapsed:?}"))?;
    Ok(format!("supervised held-out accuracy {} in {:.0?}", pct(acc), elapsed))
}

/// Trained stores and test accuracies per mode, one entry per seed.
type Runs = HashMap<Mode, Vec<trainer::RunOutput>>;

fn ordering(desk: &Desk, runs: &mut Runs) -> Check {
    let start = Instant::now();
    for mode in Mode::ALL {
        for seed in SEEDS {
            let cfg = desk.config.with_mode(mode).with_seed(seed);
            let out = trainer::run(&cfg, &desk.data).map_err(|e| format!("{mode} seed {seed}: {e}"))?;
            runs.entry(mode).or_default().push(out);
        }
    }
    let elapsed = start.elapsed();
    let acc = |m: Mode| mean(&runs[&m].iter().map(|o| o.report.test_accuracy).collect::<Vec<_>>());
    let table: Vec<String> = Mode::ALL.iter().map(|&m| format!("{m} {}", pct(acc(m)))).collect();
    let table = table.join(", ");
    let chance = 1.0 / desk.data.num_classes() as f64;
    ensure(
        acc(Mode::SimclrTransform) >= acc(Mode::SimclrSelf) + 0.03,
        format!("transform not 3 points above self: {table}"),
    )?;
    ensure(acc(Mode::SimclrObject) >= acc(Mode::SimclrSelf), format!("object below self: {table}"))?;
    for m in Mode::ALL {
        ensure(acc(m) > 2.0 * chance, format!("{m} not above twice chance: {table}"))?;
    }
    ensure(elapsed < Duration::from_secs(90 * 60), format!("took {elapsed:?}"))?;
    Ok(format!("{table} in {:.0?}", elapsed))
}

fn gap_robustness(desk: &Desk) -> Check {
    let mut cfg = desk.config.with_seed(SEEDS[0]);
    cfg.data.rotation_only = true;
    let sweep = trainer::run_gap_sweep(&cfg, &desk.rotation_data, GapMode::Fixed).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for r in sweep {
        let out = r.map_err(|(gap, e)| format!("gap {gap}: {e}"))?;
        points.push((out.report.gap.unwrap(), out.report.test_accuracy));
    }
    let table: Vec<String> = points.iter().map(|(g, a)| format!("{g}s {}", pct(*a))).collect();
    let table = table.join(", ");
    let base = points.iter().find(|(g, _)| *g == 0.0).map(|p| p.1).ok_or("no gap-0 run")?;
    let nonzero: Vec<f64> = points.iter().filter(|(g, _)| *g > 0.0).map(|p| p.1).collect();
    let (lo, hi) = nonzero.iter().fold((1.0f64, 0.0f64), |(l, h), &a| (l.min(a), h.max(a)));
    ensure(hi - lo < 0.08, format!("nonzero-gap spread {}: {table}", pct(hi - lo)))?;
    ensure(nonzero.iter().all(|&a| a > base), format!("a nonzero gap does not beat gap 0: {table}"))?;
    Ok(format!("{table}; nonzero spread {}", pct(hi - lo)))
}

fn transfer(desk: &Desk, runs: &Runs) -> Check {
    let acc = |mode: Mode| -> Result<f64, String> {
        let mut v = Vec::new();
        for (out, seed) in runs[&mode].iter().zip(SEEDS) {
            let cfg = desk.config.with_mode(mode).with_seed(seed);
            v.push(trainer::transfer_eval(&out.store, &cfg, &desk.transfer).map_err(|e| e.to_string())?.test_accuracy);
        }
        Ok(mean(&v))
    };
    let (t, s) = (acc(Mode::SimclrTransform)?, acc(Mode::SimclrSelf)?);
    let msg = format!("recolor transfer: transform {} vs self {}", pct(t), pct(s));
    ensure(t >= s + 0.02, msg.clone())?;
    Ok(msg)
}

fn determinism(desk: &Desk, runs: &Runs) -> Check {
    let cfg = desk.config.with_mode(Mode::SimclrTransform).with_seed(SEEDS[0]);
    let again = trainer::run(&cfg, &desk.data).map_err(|e| e.to_string())?;
    let first = runs[&Mode::SimclrTransform][0].report.to_csv();
    ensure(again.report.to_csv().as_bytes() == first.as_bytes(), "metrics CSV differs between identical runs")?;
    let h = trainer::report::combined_csv(&[again.report]);
    Ok(format!("{} identical CSV bytes", h.len()))
}

fn record(results: &mut Vec<(usize, bool)>, id: usize, name: &str, check: impl FnOnce() -> Check) {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match &outcome {
        Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
        Err(why) => println!("FAIL {id:>2} {name}: {why}"),
    }
    results.push((id, outcome.is_ok()));
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    record(&mut results, 1, "loss oracle equivalence", loss_oracle);
    record(&mut results, 2, "gradient suite", gradient_suite);
    record(&mut results, 3, "sampler constraint suite", sampler_suite);
    record(&mut results, 4, "geometry suite", geometry_suite);
    record(&mut results, 5, "counts replication", counts);

    let desk = desk();
    let mut runs = Runs::new();
    record(&mut results, 6, "separability gate", || separability(&desk));
    record(&mut results, 7, "ordering replication", || ordering(&desk, &mut runs));
    record(&mut results, 8, "gap robustness", || gap_robustness(&desk));
    let have_runs = [Mode::SimclrTransform, Mode::SimclrSelf]
        .iter()
        .all(|m| runs.get(m).is_some_and(|v| v.len() == SEEDS.len()));
    record(&mut results, 9, "transfer ordering", || {
        ensure(have_runs, "pretraining runs missing")?;
        transfer(&desk, &runs)
    });
    record(&mut results, 10, "determinism", || {
        ensure(have_runs, "pretraining runs missing")?;
        determinism(&desk, &runs)
    });

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
