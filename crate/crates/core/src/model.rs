//! Backbone encoder, projection head and linear classifier.
//!
//! Parameters live in one [`ParamStore`] under the prefixes
//! [`BACKBONE`], [`PROJECTION`] and [`CLASSIFIER`]. Linear weights are stored
//! `[in, out]`, conv kernels `[out, in, k, k]`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Array, ParamStore, Tape, Var};
use crate::rng;

pub const BACKBONE: &str = "backbone.";
pub const PROJECTION: &str = "projection.";
pub const CLASSIFIER: &str = "classifier.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvStage {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Conv stages (each followed by ReLU), then a global mean pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    pub stages: Vec<ConvStage>,
    /// Square input side in pixels.
    pub input_size: usize,
    /// Normalize each conv output with batch statistics. Breaks batch
    /// independence of `embed`, so it is off unless asked for.
    #[serde(default)]
    pub batch_norm: bool,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        let stage = |out_channels, stride| ConvStage {
            out_channels,
            kernel: 3,
            stride,
        };
        BackboneSpec {
            stages: vec![stage(16, 2), stage(32, 2), stage(64, 2), stage(64, 2)],
            input_size: 32,
            batch_norm: false,
        }
    }
}

impl BackboneSpec {
    pub fn feature_dim(&self) -> usize {
        self.stages.last().map_or(0, |s| s.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() < 2 {
            return Err(Error::Config("backbone needs at least 2 conv stages".into()));
        }
        if self.feature_dim() < 8 {
            return Err(Error::Config(format!(
                "feature_dim {} is below 8",
                self.feature_dim()
            )));
        }
        let mut side = self.input_size;
        for (i, s) in self.stages.iter().enumerate() {
            if s.out_channels == 0 || s.kernel == 0 || s.stride == 0 {
                return Err(Error::Config(format!("stage {i} has a zero field")));
            }
            let pad = s.kernel / 2;
            if s.kernel > side + 2 * pad {
                return Err(Error::Config(format!("stage {i} kernel exceeds input {side}")));
            }
            side = (side + 2 * pad - s.kernel) / s.stride + 1;
        }
        Ok(())
    }
}

/// Two affine layers with a ReLU between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSpec {
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec {
            hidden_dim: 64,
            out_dim: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub num_classes: usize,
}

fn conv_name(i: usize, part: &str) -> String {
    format!("{BACKBONE}conv{i}.{part}")
}

/// He-style uniform draw: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
fn he_uniform(shape: &[usize], fan_in: usize, r: &mut rng::Rng) -> Array {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| r.random_range(-bound..bound)).collect())
        .expect("shape matches data")
}

/// Backbone and projection parameters; biases start at zero.
pub fn init_model(backbone: &BackboneSpec, proj: &ProjectionSpec, seed: u64) -> Result<ParamStore> {
    backbone.validate()?;
    if proj.hidden_dim == 0 || proj.out_dim == 0 {
        return Err(Error::Config("projection dims must be positive".into()));
    }
    let mut r = rng::derived(seed, &[0x6d6f_6465]);
    let mut store = ParamStore::new();
    let mut in_ch = 3;
    for (i, s) in backbone.stages.iter().enumerate() {
        let fan_in = in_ch * s.kernel * s.kernel;
        store.insert(
            conv_name(i, "weight"),
            he_uniform(&[s.out_channels, in_ch, s.kernel, s.kernel], fan_in, &mut r),
            true,
        );
        store.insert(conv_name(i, "bias"), Array::zeros(&[s.out_channels]), true);
        in_ch = s.out_channels;
    }
    let f = backbone.feature_dim();
    store.insert(
        format!("{PROJECTION}fc1.weight"),
        he_uniform(&[f, proj.hidden_dim], f, &mut r),
        true,
    );
    store.insert(format!("{PROJECTION}fc1.bias"), Array::zeros(&[proj.hidden_dim]), true);
    store.insert(
        format!("{PROJECTION}fc2.weight"),
        he_uniform(&[proj.hidden_dim, proj.out_dim], proj.hidden_dim, &mut r),
        true,
    );
    store.insert(format!("{PROJECTION}fc2.bias"), Array::zeros(&[proj.out_dim]), true);
    Ok(store)
}

/// Add (or replace) a fresh linear classifier head.
pub fn init_classifier(store: &mut ParamStore, feature_dim: usize, spec: ClassifierSpec, seed: u64) -> Result<()> {
    if spec.num_classes < 2 {
        return Err(Error::Config("classifier needs at least 2 classes".into()));
    }
    let mut r = rng::derived(seed, &[0x636c_6173]);
    store.insert(
        format!("{CLASSIFIER}weight"),
        he_uniform(&[feature_dim, spec.num_classes], feature_dim, &mut r),
        true,
    );
    store.insert(format!("{CLASSIFIER}bias"), Array::zeros(&[spec.num_classes]), true);
    Ok(())
}

/// Backbone features `[B, feature_dim]` for images `[B, 3, H, W]`.
pub fn embed_on(tape: &mut Tape, store: &ParamStore, spec: &BackboneSpec, images: Var) -> Result<Var> {
    let s = tape.value(images).shape().to_vec();
    if s.len() != 4 || s[1] != 3 || s[2] != spec.input_size || s[3] != spec.input_size {
        return Err(Error::Dimension {
            op: "embed",
            lhs: s,
            rhs: vec![0, 3, spec.input_size, spec.input_size],
        });
    }
    let mut h = images;
    for (i, stage) in spec.stages.iter().enumerate() {
        let w = tape.param(store, &conv_name(i, "weight"))?;
        let b = tape.param(store, &conv_name(i, "bias"))?;
        h = tape.conv2d(h, w, stage.stride, stage.kernel / 2)?;
        if spec.batch_norm {
            h = tape.batch_norm(h)?;
        }
        h = tape.add_bias(h, b)?;
        h = tape.relu(h);
    }
    tape.mean_pool(h)
}

fn linear(tape: &mut Tape, store: &ParamStore, x: Var, prefix: &str) -> Result<Var> {
    let w = tape.param(store, &format!("{prefix}weight"))?;
    let b = tape.param(store, &format!("{prefix}bias"))?;
    let h = tape.matmul(x, w)?;
    tape.add_bias(h, b)
}

/// Unit-norm projections `[B, d]` of features `[B, feature_dim]`.
pub fn project_on(tape: &mut Tape, store: &ParamStore, features: Var) -> Result<Var> {
    let h = linear(tape, store, features, &format!("{PROJECTION}fc1."))?;
    let h = tape.relu(h);
    let z = linear(tape, store, h, &format!("{PROJECTION}fc2."))?;
    tape.l2_normalize(z)
}

/// Raw logits `[B, C]`.
pub fn classify_on(tape: &mut Tape, store: &ParamStore, features: Var) -> Result<Var> {
    linear(tape, store, features, CLASSIFIER)
}

pub fn embed(store: &ParamStore, spec: &BackboneSpec, images: &Array) -> Result<Array> {
    let mut t = Tape::new();
    let x = t.input(images.clone());
    let f = embed_on(&mut t, store, spec, x)?;
    Ok(t.value(f).clone())
}

pub fn project(store: &ParamStore, features: &Array) -> Result<Array> {
    let mut t = Tape::new();
    let x = t.input(features.clone());
    let z = project_on(&mut t, store, x)?;
    Ok(t.value(z).clone())
}

pub fn classify(store: &ParamStore, features: &Array) -> Result<Array> {
    let mut t = Tape::new();
    let x = t.input(features.clone());
    let l = classify_on(&mut t, store, x)?;
    Ok(t.value(l).clone())
}

/// Index of the largest logit in each row; ties resolve to the lower index.
pub fn argmax_rows(logits: &Array) -> Vec<usize> {
    let c = *logits.shape().last().unwrap_or(&1);
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
