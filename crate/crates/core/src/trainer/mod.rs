//! Two-phase training protocol.
//!
//! Contrastive modes pretrain the backbone and projection head on positive
//! pairs, then fit a linear classifier on frozen backbone features of a
//! sampled share of the training frames and report accuracy on frames of
//! held-out objects. The supervised mode trains backbone and classifier
//! end to end instead.
//!
//! Every random draw comes from a stream derived from the run seed plus a
//! fixed label path (initialization, epoch order, each batch, probe epochs),
//! so a run is reproducible from its configuration and seed alone.

pub mod config;
pub mod report;

#[cfg(test)]
mod tests;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

pub use config::{DataConfig, ExperimentConfig, GapConfig, LossConfig, ModelConfig, Mode, ReportConfig, SamplerConfig, TrainConfig};
pub use report::MetricsReport;

use crate::augment::{self, AugmentConfig};
use crate::contrastive::ntxent_on;
use crate::dataio::{self, Image, Manifest, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{self, BackboneSpec, BACKBONE, CLASSIFIER, PROJECTION};
use crate::numcore::{self, checkpoint, Array, ParamStore, Sgd, Tape};
use crate::rng;
use crate::sampler::{self, GapMode, PairingPolicy};

const INIT_STREAM: u64 = 1;
const EPOCH_STREAM: u64 = 2;
const BATCH_STREAM: u64 = 3;
const PROBE_STREAM: u64 = 4;
const SUBSET_STREAM: u64 = 5;
/// Images per forward pass when extracting features.
const FEATURE_CHUNK: usize = 256;
/// Floor on feature standard deviations in the probe.
const STD_FLOOR: f64 = 1e-6;

/// Frames of one side of the object split and their square object crops.
#[derive(Debug, Clone)]
pub struct Split {
    pub manifest: Manifest,
    pub crops: Vec<Image>,
}

impl Split {
    pub fn new(manifest: Manifest) -> Result<Self> {
        let crops = dataio::load_crops(&manifest)?;
        Ok(Split { manifest, crops })
    }
}

/// A dataset split into training objects and held-out objects.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: Split,
    pub test: Split,
    /// Sorted class ids; a class's label is its position here.
    pub classes: Vec<u32>,
}

impl Data {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        Self::load_path(&cfg.manifest, cfg)
    }

    /// Load a manifest other than `cfg.manifest` with the same split rules.
    pub fn load_path(path: &Path, cfg: &DataConfig) -> Result<Self> {
        Self::from_manifest(&dataio::load_manifest(path)?, cfg)
    }

    pub fn from_manifest(manifest: &Manifest, cfg: &DataConfig) -> Result<Self> {
        let manifest = if cfg.rotation_only { manifest.rotation_only() } else { manifest.clone() };
        let classes = manifest.class_ids();
        let (train, test) = dataio::split_objects(
            &manifest,
            SplitSpec {
                holdout_objects_per_class: cfg.holdout_objects_per_class,
                seed: cfg.split_seed,
            },
        )?;
        Ok(Data {
            train: Split::new(train)?,
            test: Split::new(test)?,
            classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label(&self, class_id: u32) -> Result<usize> {
        self.classes.binary_search(&class_id).map_err(|_| Error::Index {
            index: class_id as usize,
            len: self.classes.len(),
        })
    }

    fn labels(&self, split: &Split, idx: &[usize]) -> Result<Vec<usize>> {
        idx.iter().map(|&i| self.label(split.manifest.record(i).class_id)).collect()
    }

    pub fn fps(&self) -> f64 {
        self.train.manifest.fps()
    }
}

/// Trained parameters plus per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct Trained {
    pub store: ParamStore,
    pub losses: Vec<f64>,
}

/// Linear-probe or supervised evaluation results.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub per_class_accuracy: Vec<(u32, f64)>,
    pub probe_loss: Vec<f64>,
}

fn batch_rng(seed: u64, stream: u64, epoch: usize, batch: usize) -> rng::Rng {
    rng::derived(seed, &[stream, epoch as u64, batch as u64])
}

/// Batches of one epoch: a shuffled pass over all eligible anchors, dropping
/// the incomplete tail.
fn epoch_batches(anchors: Vec<usize>, size: usize) -> Result<Vec<Vec<usize>>> {
    if anchors.len() < size {
        return Err(Error::Batch {
            needed: size,
            available: anchors.len(),
        });
    }
    Ok(anchors.chunks_exact(size).map(<[usize]>::to_vec).collect())
}

fn check_step(store: &mut ParamStore, sgd: &Sgd, epoch: usize, batch: usize) -> Result<()> {
    sgd.step(store).map_err(|e| match e {
        Error::Divergence(_) => Error::LossDiverged { epoch, batch },
        other => other,
    })
}

/// Contrastive pretraining of backbone and projection head.
pub fn pretrain(config: &ExperimentConfig, data: &Data) -> Result<Trained> {
    config.validate()?;
    let policy = config.policy(data.fps())?;
    let seed = config.train.seed;
    let mut store = model::init_model(&config.model.backbone, &config.model.projection, rng::derive_seed(seed, &[INIT_STREAM]))?;
    let sgd = Sgd::new(config.train.lr, config.train.momentum)?;
    let mut losses = Vec::with_capacity(config.train.pretrain_epochs);
    for epoch in 0..config.train.pretrain_epochs {
        let mut order = rng::derived(seed, &[EPOCH_STREAM, epoch as u64]);
        let anchors = sampler::shuffled_anchors(&data.train.manifest, &policy, &mut order);
        let batches = epoch_batches(anchors, config.train.batch_pairs)?;
        let mut total = 0.0;
        for (b, anchors) in batches.iter().enumerate() {
            let mut r = batch_rng(seed, BATCH_STREAM, epoch, b);
            let loss = contrastive_step(config, data, &policy, anchors, &mut store, &sgd, &mut r, (epoch, b))?;
            total += loss;
        }
        let mean = total / batches.len() as f64;
        log::info!("{} epoch {epoch}: loss {mean:.4}", config.train.mode);
        losses.push(mean);
    }
    Ok(Trained { store, losses })
}

#[allow(clippy::too_many_arguments)]
fn contrastive_step(
    config: &ExperimentConfig,
    data: &Data,
    policy: &PairingPolicy,
    anchors: &[usize],
    store: &mut ParamStore,
    sgd: &Sgd,
    r: &mut rng::Rng,
    (epoch, batch): (usize, usize),
) -> Result<f64> {
    let pairs = sampler::pair_anchors(&data.train.manifest, policy, anchors, r)?;
    let views = sampler::augment_pairs(&pairs, &data.train.crops, &config.augment, r)?;
    let mut tape = Tape::new();
    let x = tape.input(views.to_array()?);
    let f = model::embed_on(&mut tape, store, &config.model.backbone, x)?;
    let z = model::project_on(&mut tape, store, f)?;
    let loss = ntxent_on(&mut tape, z, config.loss.temperature)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::LossDiverged { epoch, batch });
    }
    numcore::backward(&tape, loss, store)?;
    check_step(store, sgd, epoch, batch)?;
    Ok(value)
}

/// Backbone features of deterministically transformed crops.
pub fn extract_features(store: &ParamStore, spec: &BackboneSpec, crops: &[Image], idx: &[usize]) -> Result<Array> {
    let size = (spec.input_size, spec.input_size);
    let mut rows = Vec::with_capacity(idx.len());
    let mut dim = spec.feature_dim();
    for chunk in idx.chunks(FEATURE_CHUNK) {
        let images: Vec<Image> = chunk.iter().map(|&i| augment::eval_transform(&crops[i], size)).collect();
        let f = model::embed(store, spec, &augment::to_batch(&images)?)?;
        dim = f.shape()[1];
        rows.extend_from_slice(f.data());
    }
    Array::new(vec![idx.len(), dim], rows)
}

/// Per-column mean and standard deviation (population, floored).
fn column_stats(x: &Array) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut mean = vec![0.0; d];
    for row in x.data().chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; d];
    for row in x.data().chunks_exact(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2) / n as f64;
        }
    }
    (mean, var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect())
}

fn standardize(x: &Array, mean: &[f64], std: &[f64]) -> Array {
    let d = mean.len();
    let data = x
        .data()
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s))
        .collect();
    Array::new(x.shape().to_vec(), data).expect("same shape")
}

fn rows(x: &Array, idx: &[usize]) -> Array {
    let d = x.shape()[1];
    let data = idx.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
    Array::new(vec![idx.len(), d], data).expect("rows exist")
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

fn per_class(classes: &[u32], pred: &[usize], labels: &[usize]) -> Vec<(u32, f64)> {
    classes
        .iter()
        .enumerate()
        .map(|(c, &id)| {
            let (hit, n) = pred
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == c)
                .fold((0, 0), |(h, n), (p, l)| (h + (p == l) as usize, n + 1));
            (id, if n == 0 { 0.0 } else { hit as f64 / n as f64 })
        })
        .collect()
}

/// Add a zero linear classifier. Every class starts out identical, so
/// training does not depend on how classes are numbered.
fn zero_head(store: &mut ParamStore, feature_dim: usize, num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::Config("classifier needs at least 2 classes".into()));
    }
    store.insert(format!("{CLASSIFIER}weight"), Array::zeros(&[feature_dim, num_classes]), true);
    store.insert(format!("{CLASSIFIER}bias"), Array::zeros(&[num_classes]), true);
    Ok(())
}

/// Fit a zero-initialized softmax classifier on standardized features.
fn fit_probe(config: &TrainConfig, features: &Array, labels: &[usize], classes: usize, seed: u64) -> Result<(ParamStore, Vec<f64>)> {
    let mut head = ParamStore::new();
    zero_head(&mut head, features.shape()[1], classes)?;
    let sgd = Sgd::new(config.eval_lr, config.eval_momentum)?;
    let n = labels.len();
    let mut losses = Vec::with_capacity(config.eval_epochs);
    for epoch in 0..config.eval_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::derived(seed, &[PROBE_STREAM, epoch as u64]));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.eval_batch).enumerate() {
            let mut tape = Tape::new();
            let x = tape.input(rows(features, chunk));
            let logits = model::classify_on(&mut tape, &head, x)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let loss = tape.softmax_cross_entropy(logits, &y)?;
            total += tape.value(loss).item() * chunk.len() as f64;
            numcore::backward(&tape, loss, &mut head)?;
            check_step(&mut head, &sgd, epoch, b)?;
        }
        losses.push(total / n.max(1) as f64);
    }
    Ok((head, losses))
}

/// Linear evaluation of a frozen backbone on `data`. A fresh classifier is
/// fitted on a `data.eval_fraction` share of the training frames; accuracy
/// is measured on every held-out frame. The checkpoint is left untouched.
pub fn linear_eval(store: &ParamStore, config: &ExperimentConfig, data: &Data) -> Result<Evaluation> {
    let spec = &config.model.backbone;
    check_compatible(store, spec)?;
    let before = (store.digest(BACKBONE), store.digest(PROJECTION));
    let seed = config.train.seed;
    let subset = dataio::sample_eval_indices(
        &data.train.manifest,
        config.data.eval_fraction,
        rng::derive_seed(seed, &[SUBSET_STREAM]),
    )?;
    if subset.is_empty() {
        return Err(Error::Batch { needed: 1, available: 0 });
    }
    let train_x = extract_features(store, spec, &data.train.crops, &subset)?;
    let test_idx: Vec<usize> = (0..data.test.manifest.len()).collect();
    let test_x = extract_features(store, spec, &data.test.crops, &test_idx)?;
    let train_y = data.labels(&data.train, &subset)?;
    let test_y = data.labels(&data.test, &test_idx)?;

    let (mean, std) = column_stats(&train_x);
    let train_x = standardize(&train_x, &mean, &std);
    let test_x = standardize(&test_x, &mean, &std);
    let (head, probe_loss) = fit_probe(&config.train, &train_x, &train_y, data.num_classes(), seed)?;

    let train_pred = model::argmax_rows(&model::classify(&head, &train_x)?);
    let test_pred = model::argmax_rows(&model::classify(&head, &test_x)?);
    if (store.digest(BACKBONE), store.digest(PROJECTION)) != before {
        return Err(Error::Checkpoint("backbone changed during linear evaluation".into()));
    }
    Ok(Evaluation {
        train_accuracy: accuracy(&train_pred, &train_y),
        test_accuracy: accuracy(&test_pred, &test_y),
        per_class_accuracy: per_class(&data.classes, &test_pred, &test_y),
        probe_loss,
    })
}

/// Linear evaluation on another dataset, with its own object split and a
/// classifier sized to its classes.
pub fn transfer_eval(store: &ParamStore, config: &ExperimentConfig, transfer: &Data) -> Result<Evaluation> {
    linear_eval(store, config, transfer)
}

/// End-to-end supervised training of backbone and classifier with
/// augmented views and softmax cross-entropy.
pub fn supervised_train(config: &ExperimentConfig, data: &Data) -> Result<Trained> {
    config.validate()?;
    let seed = config.train.seed;
    let spec = &config.model.backbone;
    let mut store = model::init_model(spec, &config.model.projection, rng::derive_seed(seed, &[INIT_STREAM]))?;
    zero_head(&mut store, spec.feature_dim(), data.num_classes())?;
    let sgd = Sgd::new(config.train.supervised_lr, config.train.momentum)?;
    let batch = 2 * config.train.batch_pairs;
    let mut losses = Vec::with_capacity(config.train.pretrain_epochs);
    let all: Vec<usize> = (0..data.train.manifest.len()).collect();
    for epoch in 0..config.train.pretrain_epochs {
        let mut order = all.clone();
        order.shuffle(&mut rng::derived(seed, &[EPOCH_STREAM, epoch as u64]));
        let batches = epoch_batches(order, batch)?;
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let mut r = batch_rng(seed, BATCH_STREAM, epoch, b);
            let images = idx
                .iter()
                .map(|&i| augment::apply(&data.train.crops[i], &config.augment, &mut r))
                .collect::<Result<Vec<_>>>()?;
            let labels = data.labels(&data.train, idx)?;
            let mut tape = Tape::new();
            let x = tape.input(augment::to_batch(&images)?);
            let f = model::embed_on(&mut tape, &store, spec, x)?;
            let logits = model::classify_on(&mut tape, &store, f)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::LossDiverged { epoch, batch: b });
            }
            total += value;
            numcore::backward(&tape, loss, &mut store)?;
            check_step(&mut store, &sgd, epoch, b)?;
        }
        let mean = total / batches.len() as f64;
        log::info!("supervised epoch {epoch}: loss {mean:.4}");
        losses.push(mean);
    }
    Ok(Trained { store, losses })
}

/// Accuracy of a supervised model's own classifier.
pub fn supervised_eval(store: &ParamStore, config: &ExperimentConfig, data: &Data) -> Result<Evaluation> {
    let spec = &config.model.backbone;
    let score = |split: &Split| -> Result<(Vec<usize>, Vec<usize>)> {
        let idx: Vec<usize> = (0..split.manifest.len()).collect();
        let f = extract_features(store, spec, &split.crops, &idx)?;
        Ok((model::argmax_rows(&model::classify(store, &f)?), data.labels(split, &idx)?))
    };
    let (train_pred, train_y) = score(&data.train)?;
    let (test_pred, test_y) = score(&data.test)?;
    Ok(Evaluation {
        train_accuracy: accuracy(&train_pred, &train_y),
        test_accuracy: accuracy(&test_pred, &test_y),
        per_class_accuracy: per_class(&data.classes, &test_pred, &test_y),
        probe_loss: Vec::new(),
    })
}

/// A finished run: its report and trained parameters.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub store: ParamStore,
}

pub fn run_id(config: &ExperimentConfig) -> String {
    format!("{}-{}-s{}", config.train.mode, &config.fingerprint()[..12], config.train.seed)
}

fn make_report(config: &ExperimentConfig, data: &Data, trained: &Trained, eval: Evaluation, started: Instant) -> MetricsReport {
    let gap = config.sampler.gap.map(|g| g.seconds);
    MetricsReport {
        run_id: run_id(config),
        mode: config.train.mode,
        gap,
        self_equivalent: gap == Some(0.0),
        seed: config.train.seed,
        split_seed: config.data.split_seed,
        config_fingerprint: config.fingerprint(),
        pretrain_loss: trained.losses.clone(),
        probe_loss: eval.probe_loss,
        train_accuracy: eval.train_accuracy,
        test_accuracy: eval.test_accuracy,
        per_class_accuracy: eval.per_class_accuracy,
        num_classes: data.num_classes(),
        transfer: false,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

/// Train and evaluate one configuration on already loaded data.
pub fn run(config: &ExperimentConfig, data: &Data) -> Result<RunOutput> {
    let started = Instant::now();
    let (trained, eval) = if config.train.mode.is_contrastive() {
        let t = pretrain(config, data)?;
        let e = linear_eval(&t.store, config, data)?;
        (t, e)
    } else {
        let t = supervised_train(config, data)?;
        let e = supervised_eval(&t.store, config, data)?;
        (t, e)
    };
    log::info!("{}: test accuracy {:.4}", run_id(config), eval.test_accuracy);
    Ok(RunOutput {
        report: make_report(config, data, &trained, eval, started),
        store: trained.store,
    })
}

/// One transform run per gap of the frame rate's sweep grid. A failed run
/// is logged and skipped; the remaining gaps still run.
pub fn run_gap_sweep(config: &ExperimentConfig, data: &Data, mode: GapMode) -> Result<Vec<std::result::Result<RunOutput, (f64, Error)>>> {
    let grid = sampler::gap_grid(data.fps())?;
    Ok(grid
        .into_iter()
        .map(|gap| {
            run(&config.with_gap(mode, gap), data).map_err(|e| {
                log::error!("gap {gap}: {e}");
                (gap, e)
            })
        })
        .collect())
}

/// Transfer-evaluate a trained checkpoint and report it like a run.
pub fn transfer_report(store: &ParamStore, config: &ExperimentConfig, transfer: &Data) -> Result<MetricsReport> {
    let started = Instant::now();
    let eval = transfer_eval(store, config, transfer)?;
    let trained = Trained {
        store: ParamStore::new(),
        losses: Vec::new(),
    };
    let mut report = make_report(config, transfer, &trained, eval, started);
    report.run_id = format!("{}-transfer", report.run_id);
    report.transfer = true;
    Ok(report)
}

/// Files written for a run, all under `dir`.
pub struct RunFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub summary: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: PathBuf) -> Self {
        RunFiles {
            config: dir.join("config.json"),
            checkpoint: dir.join("checkpoint.mvck"),
            metrics: dir.join("metrics.csv"),
            summary: dir.join("summary.json"),
            dir,
        }
    }
}

/// Write the resolved config, checkpoint, metrics CSV and JSON summary under
/// `<out_dir>/<run_id>/`.
pub fn save_run(config: &ExperimentConfig, out: &RunOutput) -> Result<RunFiles> {
    let files = RunFiles::in_dir(config.report.out_dir.join(&out.report.run_id));
    fs::create_dir_all(&files.dir).map_err(|e| Error::io(&files.dir, e))?;
    fs::write(&files.config, config.to_json()).map_err(|e| Error::io(&files.config, e))?;
    checkpoint::save(&out.store, &files.checkpoint)?;
    fs::write(&files.metrics, out.report.to_csv()).map_err(|e| Error::io(&files.metrics, e))?;
    report::write_summary(&out.report, &files.summary)?;
    Ok(files)
}

/// Check that `store` holds a backbone matching `spec`.
pub fn check_compatible(store: &ParamStore, spec: &BackboneSpec) -> Result<()> {
    let mut in_ch = 3;
    for (i, s) in spec.stages.iter().enumerate() {
        let name = format!("{BACKBONE}conv{i}.weight");
        let want = [s.out_channels, in_ch, s.kernel, s.kernel];
        let got = store.value(&name)?.shape();
        if got != want {
            return Err(Error::Dimension {
                op: "checkpoint",
                lhs: got.to_vec(),
                rhs: want.to_vec(),
            });
        }
        in_ch = s.out_channels;
    }
    Ok(())
}

/// Augment config that reproduces evaluation preprocessing.
pub fn eval_augment(spec: &BackboneSpec) -> AugmentConfig {
    AugmentConfig::identity((spec.input_size, spec.input_size))
}
