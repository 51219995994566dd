use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::model::{BackboneSpec, ProjectionSpec};
use crate::sampler::{GapMode, GapSpec, PairingPolicy, Setting};

/// What a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SimclrSelf,
    SimclrTransform,
    SimclrObject,
    SimclrClass,
    Supervised,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::SimclrSelf,
        Mode::SimclrTransform,
        Mode::SimclrObject,
        Mode::SimclrClass,
        Mode::Supervised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SimclrSelf => "simclr_self",
            Mode::SimclrTransform => "simclr_transform",
            Mode::SimclrObject => "simclr_object",
            Mode::SimclrClass => "simclr_class",
            Mode::Supervised => "supervised",
        }
    }

    pub fn is_contrastive(self) -> bool {
        self != Mode::Supervised
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Unknown {
            kind: "mode",
            value: s.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: PathBuf,
    /// Dataset used by transfer evaluation.
    pub transfer_manifest: Option<PathBuf>,
    pub holdout_objects_per_class: usize,
    /// Seeds the object split; kept apart from the run seed so that every
    /// run of an experiment sees the same held-out objects.
    pub split_seed: u64,
    /// Share of training frames the linear probe is fitted on.
    pub eval_fraction: f64,
    /// Ignore hodgepodge videos everywhere.
    pub rotation_only: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: PathBuf::from("data/manifest.jsonl"),
            transfer_manifest: None,
            holdout_objects_per_class: 2,
            split_seed: 0,
            eval_fraction: 0.10,
            rotation_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneSpec,
    pub projection: ProjectionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { temperature: 0.5 }
    }
}

/// Temporal gap for the transform mode. The frame rate comes from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub mode: GapMode,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// `None` pairs any two frames of a video.
    pub gap: Option<GapConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Positive pairs per contrastive batch; supervised batches hold twice as many images.
    pub batch_pairs: usize,
    /// Training epochs, contrastive or supervised.
    pub pretrain_epochs: usize,
    /// Contrastive pretraining learning rate.
    pub lr: f64,
    /// Learning rate of end-to-end supervised training.
    pub supervised_lr: f64,
    pub momentum: f64,
    pub eval_epochs: usize,
    pub eval_lr: f64,
    pub eval_momentum: f64,
    pub eval_batch: usize,
    pub seed: u64,
    /// Seeds used by sweeps and multi-seed comparisons.
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::SimclrTransform,
            batch_pairs: 32,
            pretrain_epochs: 20,
            lr: 0.003,
            supervised_lr: 0.05,
            momentum: 0.9,
            eval_epochs: 60,
            eval_lr: 0.05,
            eval_momentum: 0.9,
            eval_batch: 64,
            seed: 0,
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub out_dir: PathBuf,
    pub plot: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            out_dir: PathBuf::from("runs"),
            plot: false,
        }
    }
}

/// Everything a run depends on. Serialized as the run configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub sampler: SamplerConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub report: ReportConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let d = &self.data;
        if !(d.eval_fraction > 0.0 && d.eval_fraction <= 1.0) {
            return Err(Error::Fraction(d.eval_fraction));
        }
        if d.holdout_objects_per_class == 0 {
            return bad("data.holdout_objects_per_class must be positive");
        }
        self.model.backbone.validate()?;
        if self.model.projection.hidden_dim == 0 || self.model.projection.out_dim == 0 {
            return bad("model.projection dims must be positive");
        }
        if !(self.loss.temperature > 0.0) {
            return bad("loss.temperature must be positive");
        }
        self.augment.validate()?;
        let side = self.model.backbone.input_size;
        if self.augment.output_size != (side, side) {
            return bad("augment.output_size must equal the backbone input size");
        }
        let t = &self.train;
        if t.batch_pairs == 0 || t.eval_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if !(t.lr > 0.0 && t.supervised_lr > 0.0 && t.eval_lr > 0.0) || !(0.0..1.0).contains(&t.momentum) || !(0.0..1.0).contains(&t.eval_momentum) {
            return bad("learning rates must be positive and momenta in [0, 1)");
        }
        if self.sampler.gap.is_some() && t.mode != Mode::SimclrTransform {
            return bad("sampler.gap only applies to simclr_transform");
        }
        if let Some(g) = self.sampler.gap {
            if !(g.seconds >= 0.0) {
                return bad("sampler.gap.seconds must be non-negative");
            }
        }
        Ok(())
    }

    /// Pairing policy of a contrastive mode, for a dataset recorded at `fps`.
    pub fn policy(&self, fps: f64) -> Result<PairingPolicy> {
        let setting = match self.train.mode {
            Mode::SimclrSelf => Setting::SelfFrame,
            Mode::SimclrTransform => Setting::Transform {
                gap: self
                    .sampler
                    .gap
                    .map(|g| GapSpec::new(g.mode, g.seconds, fps))
                    .transpose()?,
            },
            Mode::SimclrObject => Setting::Object,
            Mode::SimclrClass => Setting::Class,
            Mode::Supervised => return Err(Error::Config("supervised mode has no pairing policy".into())),
        };
        Ok(PairingPolicy {
            setting,
            rotation_only: self.data.rotation_only,
        })
    }

    /// SHA-256 of the compact JSON form. Object keys serialize in sorted
    /// order, so the digest survives a parse and re-serialize round trip.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        let mut c = self.clone();
        c.train.mode = mode;
        if mode != Mode::SimclrTransform {
            c.sampler.gap = None;
        }
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.train.seed = seed;
        c
    }

    pub fn with_gap(&self, mode: GapMode, seconds: f64) -> Self {
        let mut c = self.with_mode(Mode::SimclrTransform);
        c.sampler.gap = Some(GapConfig { mode, seconds });
        c
    }
}
