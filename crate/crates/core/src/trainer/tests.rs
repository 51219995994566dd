use super::*;
use crate::model::{ConvStage, ProjectionSpec};
use crate::synthdata::{self, ImageFormat, SynthConfig};

fn tiny_data(dir: &Path) -> Data {
    let synth = SynthConfig {
        num_classes: 3,
        objects_per_class: 3,
        rotations_per_object: 1,
        fps: 1.0,
        duration: 6.0,
        revolutions: 1.0,
        image_size: 24,
        occluder: false,
        bbox_annotation_fps: None,
        image_format: ImageFormat::Mvim,
        seed: 5,
    };
    let manifest = synthdata::generate(&synth, dir).unwrap();
    Data::from_manifest(
        &manifest,
        &DataConfig {
            holdout_objects_per_class: 1,
            eval_fraction: 0.5,
            ..DataConfig::default()
        },
    )
    .unwrap()
}

fn tiny_config(mode: Mode) -> ExperimentConfig {
    let stage = |out_channels| ConvStage {
        out_channels,
        kernel: 3,
        stride: 2,
    };
    let mut c = ExperimentConfig::default().with_mode(mode);
    c.model.backbone = BackboneSpec {
        stages: vec![stage(4), stage(8)],
        input_size: 16,
        batch_norm: false,
    };
    c.model.projection = ProjectionSpec {
        hidden_dim: 8,
        out_dim: 4,
    };
    c.augment.output_size = (16, 16);
    c.train.batch_pairs = 4;
    c.train.pretrain_epochs = 2;
    c.train.eval_epochs = 5;
    c.train.eval_batch = 8;
    c
}

#[test]
fn split_holds_out_whole_objects() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    assert_eq!(data.classes, vec![0, 1, 2]);
    let train = data.train.manifest.object_keys();
    for key in data.test.manifest.object_keys() {
        assert!(!train.contains(&key));
    }
    assert_eq!(data.test.manifest.object_keys().len(), 3);
    assert_eq!(data.train.crops.len(), data.train.manifest.len());
}

#[test]
fn pretrain_is_deterministic_and_probe_leaves_backbone_alone() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(Mode::SimclrTransform);
    let a = pretrain(&cfg, &data).unwrap();
    let b = pretrain(&cfg, &data).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.store.digest(BACKBONE), b.store.digest(BACKBONE));
    assert_eq!(a.losses.len(), 2);
    assert!(a.losses.iter().all(|l| l.is_finite() && *l > 0.0));

    let other = pretrain(&cfg.with_seed(1), &data).unwrap();
    assert_ne!(a.store.digest(BACKBONE), other.store.digest(BACKBONE));

    let before = a.store.digest("");
    let e1 = linear_eval(&a.store, &cfg, &data).unwrap();
    let e2 = linear_eval(&a.store, &cfg, &data).unwrap();
    assert_eq!(a.store.digest(""), before);
    assert_eq!(e1, e2);
    assert!((0.0..=1.0).contains(&e1.test_accuracy));
    assert_eq!(e1.per_class_accuracy.len(), 3);
    assert_eq!(e1.probe_loss.len(), 5);
}

#[test]
fn every_mode_runs_and_saves() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(&dir.path().join("data"));
    for mode in Mode::ALL {
        let mut cfg = tiny_config(mode);
        cfg.report.out_dir = dir.path().join("runs");
        let out = run(&cfg, &data).unwrap();
        assert_eq!(out.report.mode, mode);
        assert_eq!(out.report.pretrain_loss.len(), 2);
        let files = save_run(&cfg, &out).unwrap();
        let back = checkpoint::load(&files.checkpoint).unwrap();
        assert_eq!(back.digest(""), out.store.digest(""));
        check_compatible(&back, &cfg.model.backbone).unwrap();
        let summary = report::read_summary(&files.summary).unwrap();
        assert_eq!(summary.run_id, out.report.run_id);
        assert_eq!(summary.per_class_accuracy, out.report.per_class_accuracy);
        let resolved = ExperimentConfig::load(&files.config).unwrap();
        assert_eq!(resolved.fingerprint(), cfg.fingerprint());
    }
}

#[test]
fn zero_gap_sweep_point_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let mut cfg = tiny_config(Mode::SimclrTransform);
    cfg.train.pretrain_epochs = 1;
    cfg.train.eval_epochs = 1;
    let runs = run_gap_sweep(&cfg, &data, GapMode::Fixed).unwrap();
    assert_eq!(runs.len(), 6);
    let ok: Vec<_> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    assert_eq!(ok[0].report.gap, Some(0.0));
    assert!(ok[0].report.self_equivalent);
    assert!(ok.iter().skip(1).all(|r| !r.report.self_equivalent));
}

#[test]
fn oversized_batch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let mut cfg = tiny_config(Mode::SimclrSelf);
    cfg.train.batch_pairs = 10_000;
    assert!(matches!(pretrain(&cfg, &data), Err(Error::Batch { .. })));
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let mut cfg = tiny_config(Mode::Supervised);
    cfg.train.supervised_lr = 1e300;
    cfg.train.momentum = 0.0;
    cfg.train.pretrain_epochs = 5;
    assert!(matches!(run(&cfg, &data), Err(Error::LossDiverged { .. })));
}

#[test]
fn column_stats_matches_direct_formula() {
    let x = Array::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
    let (mean, std) = column_stats(&x);
    assert_eq!(mean, vec![3.0, 5.0]);
    assert!((std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(std[1], STD_FLOOR);
    let z = standardize(&x, &mean, &std);
    assert!((z.row(0)[0] + (1.5f64).sqrt()).abs() < 1e-12);
}

#[test]
fn per_class_accuracy_counts_each_class() {
    let acc = per_class(&[7, 9], &[0, 1, 1, 1], &[0, 0, 1, 1]);
    assert_eq!(acc, vec![(7, 0.5), (9, 1.0)]);
    assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1]), 0.75);
}

#[test]
fn zero_epochs_leave_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let mut cfg = tiny_config(Mode::SimclrObject);
    cfg.train.pretrain_epochs = 0;
    let t = pretrain(&cfg, &data).unwrap();
    let init = model::init_model(&cfg.model.backbone, &cfg.model.projection, rng::derive_seed(0, &[INIT_STREAM])).unwrap();
    assert_eq!(t.store.digest(""), init.digest(""));
    assert!(t.losses.is_empty());
}

#[test]
fn single_pair_batches_have_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let mut cfg = tiny_config(Mode::SimclrTransform);
    cfg.train.batch_pairs = 1;
    cfg.train.pretrain_epochs = 1;
    assert_eq!(pretrain(&cfg, &data).unwrap().losses, vec![0.0]);
}

#[test]
fn gap_zero_matches_self() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let base = tiny_config(Mode::SimclrSelf);
    let own = run(&base, &data).unwrap().report;
    let gap0 = run(&base.with_gap(GapMode::Fixed, 0.0), &data).unwrap().report;
    assert_eq!(own.pretrain_loss, gap0.pretrain_loss);
    assert_eq!(own.test_accuracy, gap0.test_accuracy);
    assert_eq!(own.per_class_accuracy, gap0.per_class_accuracy);
}

#[test]
fn constant_features_predict_the_majority_class() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(Mode::SimclrSelf);
    let mut store = model::init_model(&cfg.model.backbone, &cfg.model.projection, 1).unwrap();
    for (name, p) in store.iter_mut() {
        if name.starts_with(BACKBONE) {
            p.value = p.value.map(|_| 0.0);
        }
    }
    let e = linear_eval(&store, &cfg, &data).unwrap();
    let subset = dataio::sample_eval_indices(&data.train.manifest, cfg.data.eval_fraction, rng::derive_seed(0, &[SUBSET_STREAM])).unwrap();
    let labels = data.labels(&data.train, &subset).unwrap();
    let count = |c: usize| labels.iter().filter(|l| **l == c).count();
    let majority = (0..3).fold(0, |best, c| if count(c) > count(best) { c } else { best });
    let test_labels = data.labels(&data.test, &(0..data.test.manifest.len()).collect::<Vec<_>>()).unwrap();
    let freq = test_labels.iter().filter(|l| **l == majority).count() as f64 / test_labels.len() as f64;
    assert_eq!(e.test_accuracy, freq);
}

#[test]
fn relabeling_classes_keeps_supervised_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(Mode::Supervised);
    let map = std::collections::HashMap::from([(0, 2), (1, 0), (2, 1)]);
    let relabel = |s: &Split| Split {
        manifest: s.manifest.relabeled(|c| map[&c]),
        crops: s.crops.clone(),
    };
    let permuted = Data {
        train: relabel(&data.train),
        test: relabel(&data.test),
        classes: data.classes.clone(),
    };
    let a = run(&cfg, &data).unwrap().report;
    let b = run(&cfg, &permuted).unwrap().report;
    assert_eq!(a.test_accuracy, b.test_accuracy);
    assert_eq!(a.train_accuracy, b.train_accuracy);
}

#[test]
fn rotation_only_data_has_no_hodgepodge_frames() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = DataConfig {
        rotation_only: true,
        holdout_objects_per_class: 1,
        ..DataConfig::default()
    };
    let rot = Data::from_manifest(&data.train.manifest, &cfg).unwrap();
    for split in [&rot.train, &rot.test] {
        assert!(split.manifest.records().iter().all(|r| r.video_kind.is_rotation()));
    }
}

#[test]
fn transfer_on_the_source_set_is_linear_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(Mode::SimclrSelf);
    let store = model::init_model(&cfg.model.backbone, &cfg.model.projection, 3).unwrap();
    assert_eq!(transfer_eval(&store, &cfg, &data).unwrap(), linear_eval(&store, &cfg, &data).unwrap());
}

#[test]
fn incompatible_checkpoint_is_a_shape_error() {
    let cfg = tiny_config(Mode::SimclrSelf);
    let store = model::init_model(&BackboneSpec::default(), &cfg.model.projection, 3).unwrap();
    assert!(matches!(check_compatible(&store, &cfg.model.backbone), Err(Error::Dimension { .. })));
}
