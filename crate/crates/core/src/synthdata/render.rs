//! Parametric 2D objects and their rasterization.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataio::{BBox, Image};
use crate::rng::Rng;

/// Subsamples per pixel side.
const SUPERSAMPLE: usize = 2;
/// Smallest apparent width of a tilted object, as a fraction of its face-on width.
pub const MIN_SQUASH: f64 = 0.5;
/// Largest share of object pixels the occluder may hide.
pub const MAX_OCCLUSION: f64 = 0.3;
/// Object radius relative to the scene side, before instance scaling.
const OBJECT_SCALE: f64 = 0.34;
const HAND: [f32; 3] = [0.86, 0.66, 0.52];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prim {
    Disk { c: [f64; 2], r: f64 },
    Ring { c: [f64; 2], r_in: f64, r_out: f64 },
    /// Rectangle with half extents, rotated by `rot` radians about its center.
    Rect { c: [f64; 2], half: [f64; 2], rot: f64 },
    Tri { p: [[f64; 2]; 3] },
}

impl Prim {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Prim::Disk { c, r } => (x - c[0]).powi(2) + (y - c[1]).powi(2) <= r * r,
            Prim::Ring { c, r_in, r_out } => {
                let d = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                d <= r_out * r_out && d >= r_in * r_in
            }
            Prim::Rect { c, half, rot } => {
                let (s, co) = rot.sin_cos();
                let (dx, dy) = (x - c[0], y - c[1]);
                let u = co * dx + s * dy;
                let v = -s * dx + co * dy;
                u.abs() <= half[0] && v.abs() <= half[1]
            }
            Prim::Tri { p } => {
                let side = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                let (d0, d1, d2) = (side(p[0], p[1]), side(p[1], p[2]), side(p[2], p[0]));
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
        }
    }

    fn center(&self) -> [f64; 2] {
        match *self {
            Prim::Disk { c, .. } | Prim::Ring { c, .. } | Prim::Rect { c, .. } => c,
            Prim::Tri { p } => [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0],
        }
    }

    /// Scale about the part's own center and then translate.
    fn scaled(&self, k: f64, shift: [f64; 2]) -> Prim {
        let c0 = self.center();
        let map = |q: [f64; 2]| [c0[0] + k * (q[0] - c0[0]) + shift[0], c0[1] + k * (q[1] - c0[1]) + shift[1]];
        match *self {
            Prim::Disk { c, r } => Prim::Disk { c: map(c), r: r * k },
            Prim::Ring { c, r_in, r_out } => Prim::Ring {
                c: map(c),
                r_in: r_in * k,
                r_out: r_out * k,
            },
            Prim::Rect { c, half, rot } => Prim::Rect {
                c: map(c),
                half: [half[0] * k, half[1] * k],
                rot,
            },
            Prim::Tri { p } => Prim::Tri {
                p: [map(p[0]), map(p[1]), map(p[2])],
            },
        }
    }
}

/// One primitive and the index of the instance color it is painted with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub prim: Prim,
    pub slot: usize,
}

const fn disk(x: f64, y: f64, r: f64, slot: usize) -> Part {
    Part {
        prim: Prim::Disk { c: [x, y], r },
        slot,
    }
}

const fn rect(x: f64, y: f64, hw: f64, hh: f64, rot: f64, slot: usize) -> Part {
    Part {
        prim: Prim::Rect {
            c: [x, y],
            half: [hw, hh],
            rot,
        },
        slot,
    }
}

const fn tri(a: [f64; 2], b: [f64; 2], c: [f64; 2], slot: usize) -> Part {
    Part {
        prim: Prim::Tri { p: [a, b, c] },
        slot,
    }
}

pub const MAX_CLASSES: usize = 13;

/// Canonical part layout of a class, in a unit disk. Later parts paint over
/// earlier ones.
pub fn archetype(class: usize) -> Vec<Part> {
    use std::f64::consts::FRAC_PI_4;
    match class {
        // ring with a hub
        0 => vec![
            Part {
                prim: Prim::Ring {
                    c: [0.0, 0.0],
                    r_in: 0.55,
                    r_out: 0.85,
                },
                slot: 0,
            },
            disk(0.0, 0.0, 0.22, 1),
        ],
        // dumbbell
        1 => vec![rect(0.0, 0.0, 0.55, 0.12, 0.0, 1), disk(-0.6, 0.0, 0.32, 0), disk(0.6, 0.0, 0.32, 0)],
        // three knobs
        2 => vec![disk(0.0, -0.6, 0.3, 0), disk(0.52, 0.3, 0.3, 1), disk(-0.52, 0.3, 0.3, 0)],
        // two diagonal squares
        3 => vec![
            rect(-0.35, -0.35, 0.32, 0.32, 0.0, 0),
            rect(0.35, 0.35, 0.32, 0.32, 0.0, 1),
        ],
        // plus
        4 => vec![rect(0.0, 0.0, 0.85, 0.2, 0.0, 0), rect(0.0, 0.0, 0.2, 0.85, 0.0, 1)],
        // triangle with a bar base
        5 => vec![
            tri([-0.75, 0.5], [0.75, 0.5], [0.0, -0.8], 0),
            rect(0.0, 0.6, 0.85, 0.12, 0.0, 1),
        ],
        // pinwheel of three tilted blades
        6 => vec![
            rect(0.0, -0.45, 0.16, 0.42, FRAC_PI_4, 0),
            rect(0.45, 0.3, 0.16, 0.42, FRAC_PI_4 + 2.094, 1),
            rect(-0.45, 0.3, 0.16, 0.42, FRAC_PI_4 + 4.189, 0),
        ],
        // ell
        7 => vec![rect(-0.45, 0.0, 0.2, 0.8, 0.0, 0), rect(0.1, 0.6, 0.55, 0.2, 0.0, 1)],
        // tee
        8 => vec![rect(0.0, -0.55, 0.8, 0.2, 0.0, 0), rect(0.0, 0.15, 0.18, 0.6, 0.0, 1)],
        // mushroom: cap over stem
        9 => vec![
            rect(0.0, 0.35, 0.16, 0.5, 0.0, 1),
            tri([-0.85, 0.0], [0.85, 0.0], [0.0, -0.75], 0),
        ],
        // paddle: long bar with a knob at one end
        10 => vec![rect(-0.2, 0.0, 0.65, 0.14, 0.0, 1), disk(0.55, 0.0, 0.35, 0)],
        // arrow
        11 => vec![
            rect(-0.25, 0.0, 0.55, 0.15, 0.0, 1),
            tri([0.25, -0.55], [0.25, 0.55], [0.9, 0.0], 0),
        ],
        // hourglass
        _ => vec![
            tri([-0.6, -0.85], [0.6, -0.85], [0.0, 0.0], 0),
            tri([-0.6, 0.85], [0.6, 0.85], [0.0, 0.0], 1),
        ],
    }
}

/// Hue interval (degrees) instance colors are drawn from, and the style shift
/// applied to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Palette {
    pub hue_start: f64,
    pub hue_span: f64,
    pub saturation: (f64, f64),
    pub value: (f64, f64),
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            hue_start: 0.0,
            hue_span: 200.0,
            saturation: (0.45, 0.9),
            value: (0.55, 0.95),
        }
    }
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

/// A concrete object: class layout plus instance geometry and colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecipe {
    pub class_id: usize,
    pub parts: Vec<Part>,
    pub colors: [[f32; 3]; 2],
    /// Horizontal and vertical stretch of the whole layout.
    pub stretch: [f64; 2],
    pub scale: f64,
}

impl ObjectRecipe {
    /// Draw instance parameters for one object of `class_id`.
    pub fn sample(class_id: usize, palette: &Palette, rng: &mut Rng) -> Self {
        let parts = archetype(class_id)
            .into_iter()
            .map(|p| {
                let k = rng.random_range(0.85..1.15);
                let shift = [rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06)];
                Part {
                    prim: p.prim.scaled(k, shift),
                    slot: p.slot,
                }
            })
            .collect();
        let mut color = || {
            let h = palette.hue_start + rng.random::<f64>() * palette.hue_span;
            let s = rng.random_range(palette.saturation.0..=palette.saturation.1);
            let v = rng.random_range(palette.value.0..=palette.value.1);
            hsv_to_rgb(h, s, v)
        };
        let colors = [color(), color()];
        let aspect: f64 = rng.random_range(0.8f64..1.25).sqrt();
        ObjectRecipe {
            class_id,
            parts,
            colors,
            stretch: [aspect, 1.0 / aspect],
            scale: rng.random_range(0.85..1.1),
        }
    }

    fn color_at(&self, x: f64, y: f64) -> Option<[f32; 3]> {
        self.parts
            .iter()
            .rev()
            .find(|p| p.prim.contains(x, y))
            .map(|p| self.colors[p.slot])
    }
}

/// Viewing geometry of one frame, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    /// In-plane rotation.
    pub spin: f64,
    /// Rotation about the horizontal screen axis.
    pub tilt_x: f64,
    /// Rotation about the vertical screen axis.
    pub tilt_y: f64,
}

fn squash(deg: f64) -> f64 {
    let c = deg.rem_euclid(360.0).to_radians().cos();
    c.signum() * c.abs().max(MIN_SQUASH)
}

/// Scene-level rendering options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneStyle {
    /// Contrast of a striped background texture, 0 for plain.
    pub texture: f64,
    /// Stripe direction in degrees.
    pub texture_angle: f64,
    /// Box blur radius in pixels applied after rendering.
    pub blur: f64,
    /// Object center offset from the scene center, in pixels.
    pub offset: [f64; 2],
}

impl Default for SceneStyle {
    fn default() -> Self {
        SceneStyle {
            texture: 0.0,
            texture_angle: 0.0,
            blur: 0.0,
            offset: [0.0, 0.0],
        }
    }
}

/// Rendered frame plus the tight box of object pixels (taken before occlusion).
#[derive(Debug, Clone)]
pub struct Frame {
    pub image: Image,
    pub bbox: BBox,
    /// Per-pixel object coverage before occlusion, row-major.
    pub mask: Vec<bool>,
    pub occluded_fraction: f64,
}

/// Rasterize `recipe` at `pose` in a `size x size` scene. `occluder_phase`
/// in `[0, 1)` slides a hand-colored band across the object; `None` disables
/// it. `rng` only feeds pixel noise.
pub fn render_frame(
    recipe: &ObjectRecipe,
    pose: Pose,
    occluder_phase: Option<f64>,
    size: usize,
    style: &SceneStyle,
    rng: &mut Rng,
) -> Frame {
    let (sin, cos) = pose.spin.rem_euclid(360.0).to_radians().sin_cos();
    let (qx, qy) = (squash(pose.tilt_y), squash(pose.tilt_x));
    let shade = (0.7 + 0.3 * qx.abs() * qy.abs()) * if qx * qy < 0.0 { 0.85 } else { 1.0 };
    let radius = OBJECT_SCALE * size as f64 * recipe.scale;
    let center = [size as f64 / 2.0 + style.offset[0], size as f64 / 2.0 + style.offset[1]];
    let (tsin, tcos) = style.texture_angle.to_radians().sin_cos();

    let mut image = Image::new(size, size);
    let mut mask = vec![false; size * size];
    let n = SUPERSAMPLE * SUPERSAMPLE;
    for py in 0..size {
        for px in 0..size {
            let mut acc = [0.0f32; 3];
            let mut hits = 0;
            for s in 0..n {
                let sx = px as f64 + (s % SUPERSAMPLE) as f64 / SUPERSAMPLE as f64 + 0.5 / SUPERSAMPLE as f64;
                let sy = py as f64 + (s / SUPERSAMPLE) as f64 / SUPERSAMPLE as f64 + 0.5 / SUPERSAMPLE as f64;
                // screen -> undo tilt -> undo spin -> undo instance stretch
                let x = (sx - center[0]) / radius / qx;
                let y = (sy - center[1]) / radius / qy;
                let u = (cos * x + sin * y) / recipe.stretch[0];
                let v = (-sin * x + cos * y) / recipe.stretch[1];
                let c = match recipe.color_at(u, v) {
                    Some(c) => {
                        hits += 1;
                        c.map(|k| k * shade as f32)
                    }
                    None => {
                        let stripe = ((sx * tcos + sy * tsin) / 3.0).sin().signum() as f32;
                        [0.5 + 0.5 * style.texture as f32 * stripe * 0.6; 3]
                    }
                };
                for k in 0..3 {
                    acc[k] += c[k];
                }
            }
            mask[py * size + px] = hits > 0;
            for k in 0..3 {
                let noise = rng.random_range(-0.03f32..0.03);
                image.set(k, py, px, (acc[k] / n as f32 + noise).clamp(0.0, 1.0));
            }
        }
    }
    let bbox = tight_box(&mask, size).unwrap_or(BBox::new(0.0, 0.0, size as f64, size as f64));
    let occluded_fraction = match occluder_phase {
        Some(phase) => occlude(&mut image, &mask, &bbox, phase),
        None => 0.0,
    };
    if style.blur > 0.0 {
        box_blur(&mut image, style.blur.round() as usize);
    }
    Frame {
        image,
        bbox,
        mask,
        occluded_fraction,
    }
}

/// Smallest pixel box holding every set mask pixel.
pub fn tight_box(mask: &[bool], size: usize) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let (x, y) = (i % size, i / size);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (x0 != usize::MAX).then(|| BBox::new(x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64))
}

/// Paint a vertical band rising from the bottom edge, centered at
/// `bbox.x + phase * bbox.w`, shortened until it hides at most
/// [`MAX_OCCLUSION`] of the object pixels. Returns the hidden share.
fn occlude(image: &mut Image, mask: &[bool], bbox: &BBox, phase: f64) -> f64 {
    let size = image.width;
    let total = mask.iter().filter(|m| **m).count().max(1) as f64;
    let half_w = (0.1 * bbox.w).max(1.0);
    let cx = bbox.x + phase * bbox.w;
    let xs = ((cx - half_w).floor().max(0.0) as usize)..((cx + half_w).ceil().min(size as f64) as usize);
    let mut top = (bbox.y + 0.6 * bbox.h).round() as usize;
    let hidden = |top: usize| {
        let mut n = 0;
        for y in top.min(size)..size {
            for x in xs.clone() {
                n += mask[y * size + x] as usize;
            }
        }
        n as f64 / total
    };
    while top < size && hidden(top) > MAX_OCCLUSION {
        top += 1;
    }
    for y in top.min(size)..size {
        for x in xs.clone() {
            for (k, v) in HAND.iter().enumerate() {
                image.set(k, y, x, *v);
            }
        }
    }
    hidden(top)
}

fn box_blur(image: &mut Image, radius: usize) {
    if radius == 0 {
        return;
    }
    let (w, h) = (image.width, image.height);
    for c in 0..3 {
        let src = image.plane_mut(c).to_vec();
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let (a, b) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                tmp[y * w + x] = src[y * w + a..=y * w + b].iter().sum::<f32>() / (b - a + 1) as f32;
            }
        }
        let plane = image.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (a, b) = (y.saturating_sub(radius), (y + radius).min(h - 1));
                plane[y * w + x] = (a..=b).map(|yy| tmp[yy * w + x]).sum::<f32>() / (b - a + 1) as f32;
            }
        }
    }
}
