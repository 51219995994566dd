use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x <= other.x && self.y <= other.y && self.right() >= other.right() && self.bottom() >= other.bottom()
    }

    fn intersects_image(&self, image_w: f64, image_h: f64) -> bool {
        self.x < image_w && self.y < image_h && self.right() > 0.0 && self.bottom() > 0.0
    }
}

/// Result of [`square_crop`]. `degraded` is set when the square side had to
/// be clamped to the image and can no longer contain the original box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareCrop {
    pub bbox: BBox,
    pub degraded: bool,
}

/// Extend the shorter side of `bbox` to the longer one, keeping the center
/// along the extended axis, then shift the square (never shrink it) so it
/// lies inside the image.
pub fn square_crop(bbox: BBox, image_w: usize, image_h: usize) -> Result<SquareCrop> {
    let (iw, ih) = (image_w as f64, image_h as f64);
    if !(bbox.w > 0.0 && bbox.h > 0.0) || !bbox.intersects_image(iw, ih) {
        return Err(Error::BoxOutsideImage(bbox.into()));
    }
    let mut side = bbox.w.max(bbox.h);
    let limit = iw.min(ih);
    let degraded = side > limit;
    if degraded {
        log::warn!("square crop side {side} exceeds image {image_w}x{image_h}; clamping");
        side = limit;
    }
    let x = place(bbox.x, bbox.w, side, iw);
    let y = place(bbox.y, bbox.h, side, ih);
    Ok(SquareCrop {
        bbox: BBox::new(x, y, side, side),
        degraded,
    })
}

/// Start of a `side`-long span centered on `[lo, lo + len]` and shifted into
/// `[0, limit]`. Rounding in the centering step can leave the span an ulp
/// short of the box; starting at `lo` is exact in that case.
fn place(lo: f64, len: f64, side: f64, limit: f64) -> f64 {
    let start = (lo + len / 2.0 - side / 2.0).clamp(0.0, limit - side);
    let covers = start <= lo && start + side >= lo + len;
    if !covers && lo >= 0.0 && lo + side <= limit {
        lo
    } else {
        start
    }
}

/// Componentwise linear interpolation between annotations at `t1 < t <= t2`.
pub fn interpolate_bbox(b1: BBox, t1: f64, b2: BBox, t2: f64, t: f64) -> Result<BBox> {
    if !(t1 < t && t <= t2) {
        return Err(Error::TimeRange { t, t1, t2 });
    }
    if t == t2 {
        return Ok(b2);
    }
    let a = (t - t1) / (t2 - t1);
    // exact at both ends and symmetric about a = 0.5
    let lerp = |p: f64, q: f64| (1.0 - a) * p + a * q;
    Ok(BBox::new(lerp(b1.x, b2.x), lerp(b1.y, b2.y), lerp(b1.w, b2.w), lerp(b1.h, b2.h)))
}
