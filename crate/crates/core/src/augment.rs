//! Stochastic view augmentation.
//!
//! [`apply`] runs, in this order: random square crop resized to the output
//! size, horizontal flip, color jitter (brightness, contrast, saturation) and
//! random grayscale. Values are clamped to `[0, 1]` after every color step.
//!
//! Resampling is bilinear with half-pixel centers. Output pixel `i` of a
//! window starting at `x0` with width `w` samples source coordinate
//! `x0 + (i + 0.5) * w / out - 0.5`, clamped to the valid pixel range.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataio::Image;
use crate::error::{Error, Result};
use crate::numcore::Array;
use crate::rng::Rng;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub grayscale_prob: f64,
    /// Range of the crop's area as a fraction of the source square.
    pub crop_scale: (f64, f64),
    pub flip_prob: f64,
    /// Output `(height, width)`.
    pub output_size: (usize, usize),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            grayscale_prob: 0.2,
            crop_scale: (0.5, 1.0),
            flip_prob: 0.5,
            output_size: (32, 32),
        }
    }
}

impl AugmentConfig {
    /// Crop and resize only, no randomness.
    pub fn identity(output_size: (usize, usize)) -> Self {
        AugmentConfig {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            grayscale_prob: 0.0,
            crop_scale: (1.0, 1.0),
            flip_prob: 0.0,
            output_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("augment.{name} = {v} is outside [0, 1]")))
            }
        };
        unit("brightness", self.brightness)?;
        unit("contrast", self.contrast)?;
        unit("saturation", self.saturation)?;
        unit("grayscale_prob", self.grayscale_prob)?;
        unit("flip_prob", self.flip_prob)?;
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("augment.crop_scale ({lo}, {hi}) must satisfy 0 < min <= max <= 1")));
        }
        if self.output_size.0 == 0 || self.output_size.1 == 0 {
            return Err(Error::Config("augment.output_size must be positive".into()));
        }
        Ok(())
    }
}

/// Bilinear resample of the window `[x0, x0 + w) x [y0, y0 + h)` to `out_w x out_h`.
pub fn resize_window(img: &Image, x0: f64, y0: f64, w: f64, h: f64, out_w: usize, out_h: usize) -> Image {
    let mut out = Image::new(out_w, out_h);
    let taps = |start: f64, len: f64, n: usize, limit: usize| -> Vec<(usize, usize, f32)> {
        (0..n)
            .map(|i| {
                let s = (start + (i as f64 + 0.5) * len / n as f64 - 0.5).clamp(0.0, (limit - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(limit - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(x0, w, out_w, img.width);
    let ys = taps(y0, h, out_h, img.height);
    for c in 0..3 {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let a = img.get(c, y0, x0);
                let b = img.get(c, y0, x1);
                let top = a + fx * (b - a);
                let cc = img.get(c, y1, x0);
                let d = img.get(c, y1, x1);
                let bottom = cc + fx * (d - cc);
                out.set(c, oy, ox, top + fy * (bottom - top));
            }
        }
    }
    out
}

fn center_square(img: &Image) -> (f64, f64, f64) {
    let side = img.width.min(img.height);
    (((img.width - side) / 2) as f64, ((img.height - side) / 2) as f64, side as f64)
}

/// Deterministic center square crop resized to `(height, width)`.
pub fn eval_transform(img: &Image, output_size: (usize, usize)) -> Image {
    let (x0, y0, side) = center_square(img);
    resize_window(img, x0, y0, side, side, output_size.1, output_size.0)
}

pub fn flip_horizontal(img: &mut Image) {
    let w = img.width;
    for row in img.data.chunks_mut(w) {
        row.reverse();
    }
}

#[inline]
fn luma(r: f32, g: f32, b: f32) -> f32 {
    if r == g && g == b {
        r
    } else {
        LUMA[0] * r + LUMA[1] * g + LUMA[2] * b
    }
}

fn gray_plane(img: &Image) -> Vec<f32> {
    let n = img.width * img.height;
    (0..n)
        .map(|i| luma(img.data[i], img.data[n + i], img.data[2 * n + i]))
        .collect()
}

pub fn to_grayscale(img: &mut Image) {
    let gray = gray_plane(img);
    for c in 0..3 {
        img.plane_mut(c).copy_from_slice(&gray);
    }
}

/// Blend every channel toward `target` (per pixel): `v <- f * v + (1 - f) * target`.
fn blend(img: &mut Image, factor: f32, target: &[f32]) {
    let n = img.width * img.height;
    for (i, v) in img.data.iter_mut().enumerate() {
        let t = target[i % n];
        *v = (factor * *v + (1.0 - factor) * t).clamp(0.0, 1.0);
    }
}

fn draw_factor(rng: &mut Rng, strength: f64) -> Option<f32> {
    (strength > 0.0).then(|| rng.random_range((1.0 - strength).max(0.0)..=1.0 + strength) as f32)
}

/// Apply the full augmentation pipeline. Consumes a fixed number of draws
/// per enabled step, so identical generator states give identical output.
pub fn apply(img: &Image, config: &AugmentConfig, rng: &mut Rng) -> Result<Image> {
    let (x0, y0, side) = center_square(img);
    let (lo, hi) = config.crop_scale;
    let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let crop = scale.sqrt() * side;
    if !(crop >= 1.0) {
        return Err(Error::Config(format!("crop window of {crop:.3} px is degenerate")));
    }
    let cx = x0 + rng.random::<f64>() * (side - crop);
    let cy = y0 + rng.random::<f64>() * (side - crop);
    let (out_h, out_w) = config.output_size;
    let mut out = resize_window(img, cx, cy, crop, crop, out_w, out_h);

    if config.flip_prob > 0.0 && rng.random_bool(config.flip_prob) {
        flip_horizontal(&mut out);
    }
    if let Some(f) = draw_factor(rng, config.brightness) {
        for v in out.data.iter_mut() {
            *v = (*v * f).clamp(0.0, 1.0);
        }
    }
    if let Some(f) = draw_factor(rng, config.contrast) {
        let gray = gray_plane(&out);
        let mean = gray.iter().map(|&v| v as f64).sum::<f64>() / gray.len() as f64;
        blend(&mut out, f, &vec![mean as f32; gray.len()]);
    }
    if let Some(f) = draw_factor(rng, config.saturation) {
        let gray = gray_plane(&out);
        blend(&mut out, f, &gray);
    }
    if config.grayscale_prob > 0.0 && rng.random_bool(config.grayscale_prob) {
        to_grayscale(&mut out);
    }
    Ok(out)
}

/// Stack equally sized images into a `[B, 3, H, W]` array.
pub fn to_batch(images: &[Image]) -> Result<Array> {
    let first = images.first().ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(Error::Dimension {
                op: "to_batch",
                lhs: vec![h, w],
                rhs: vec![img.height, img.width],
            });
        }
        data.extend(img.data.iter().map(|&v| v as f64));
    }
    Array::new(vec![images.len(), 3, h, w], data)
}
