//! Procedural multi-view object videos.
//!
//! Every class is a fixed layout of colored primitives; every object is an
//! instance of its class with its own colors, part sizes and proportions.
//! Each object gets `R` rotation videos (uniform angular velocity about one
//! axis, random starting phase) and one hodgepodge video whose poses are
//! drawn independently per frame. Rotations about the screen axes foreshorten
//! the object, never below [`render::MIN_SQUASH`] of its face-on width, and
//! show its mirrored, darker back side past 90 degrees.
//!
//! Output is a directory of frame images plus `manifest.jsonl` and
//! `generation.json`, which echoes the configuration.

pub mod render;

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataio::{self, interpolate_bbox, BBox, FrameRecord, Manifest, VideoKind};
use crate::error::{Error, Result};
use crate::rng;
use render::{render_frame, ObjectRecipe, Palette, Pose, SceneStyle, MAX_CLASSES};

/// Rotation kinds in the order objects receive them.
pub const ROTATION_ORDER: [VideoKind; 6] = [
    VideoKind::RotationZPos,
    VideoKind::RotationXPos,
    VideoKind::RotationYPos,
    VideoKind::RotationZNeg,
    VideoKind::RotationXNeg,
    VideoKind::RotationYNeg,
];

const OBJECT_STREAM: u64 = 0x6f62_6a;
const TRANSFER_STREAM: u64 = 0x7866_6572;
const VIDEO_STREAM: u64 = 0x7669_64;
const FRAME_STREAM: u64 = 0x6672_6d;
/// Largest tilt (degrees) of a hodgepodge frame about either screen axis,
/// measured from the nearest face-on view.
const HODGEPODGE_TILT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Ppm,
    Mvim,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Mvim => "mvim",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub objects_per_class: usize,
    /// Rotation videos per object; each object also gets one hodgepodge video.
    pub rotations_per_object: usize,
    pub fps: f64,
    pub duration: f64,
    /// Full turns completed over one rotation video.
    pub revolutions: f64,
    pub image_size: usize,
    pub occluder: bool,
    /// When set, boxes are only measured at this rate and interpolated in
    /// between; frames after the last measurement are dropped.
    pub bbox_annotation_fps: Option<f64>,
    pub image_format: ImageFormat,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SynthConfig {
    /// Small dataset used for the experiment suite.
    pub fn desk() -> Self {
        SynthConfig {
            num_classes: 8,
            objects_per_class: 8,
            rotations_per_object: 2,
            fps: 3.0,
            duration: 10.0,
            revolutions: 1.0,
            image_size: 48,
            occluder: true,
            bbox_annotation_fps: None,
            image_format: ImageFormat::Ppm,
            seed: 2024,
        }
    }

    /// Twelve classes of thirty objects with six rotations and a hodgepodge
    /// video each, two turns over twenty seconds at 1 fps.
    pub fn full_shape() -> Self {
        SynthConfig {
            num_classes: 12,
            objects_per_class: 30,
            rotations_per_object: 6,
            fps: 1.0,
            duration: 20.0,
            revolutions: 2.0,
            image_size: 48,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return bad(format!("num_classes must be in 2..={MAX_CLASSES}"));
        }
        if self.objects_per_class < 2 {
            return bad("objects_per_class must be at least 2".into());
        }
        if !(1..=6).contains(&self.rotations_per_object) {
            return bad("rotations_per_object must be in 1..=6".into());
        }
        if !(self.fps > 0.0 && self.duration > 0.0) || self.frames_per_video() == 0 {
            return bad("fps and duration must give at least one frame".into());
        }
        if self.image_size < 8 {
            return bad("image_size must be at least 8".into());
        }
        if let Some(a) = self.bbox_annotation_fps {
            if !(a > 0.0 && a <= self.fps) {
                return bad("bbox_annotation_fps must be in (0, fps]".into());
            }
        }
        Ok(())
    }

    pub fn frames_per_video(&self) -> usize {
        (self.fps * self.duration).round() as usize
    }

    pub fn videos_per_object(&self) -> usize {
        self.rotations_per_object + 1
    }

    pub fn total_sequences(&self) -> usize {
        self.num_classes * self.objects_per_class * self.videos_per_object()
    }

    /// Degrees turned per second in a rotation video.
    pub fn angular_velocity(&self) -> f64 {
        self.revolutions * 360.0 / self.duration
    }

    /// Angle between rotation-video frames `gap_seconds` apart.
    pub fn angle_for_gap(&self, gap_seconds: f64) -> f64 {
        self.angular_velocity() * gap_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleKind {
    /// Shift the hue range instance colors are drawn from.
    Recolor,
    /// Striped backgrounds.
    Background,
    /// Box blur.
    Blur,
}

impl FromStr for StyleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recolor" => Ok(StyleKind::Recolor),
            "background" => Ok(StyleKind::Background),
            "blur" => Ok(StyleKind::Blur),
            other => Err(Error::Unknown {
                kind: "transfer style",
                value: other.into(),
            }),
        }
    }
}

/// Rendering shift for a transfer dataset. Strength 0 reproduces the source
/// distribution; 1 is the default shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferStyle {
    pub kind: StyleKind,
    #[serde(default = "default_strength")]
    pub strength: f64,
}

fn default_strength() -> f64 {
    1.0
}

impl TransferStyle {
    pub fn new(kind: StyleKind) -> Self {
        TransferStyle { kind, strength: 1.0 }
    }

    fn palette(&self) -> Palette {
        let mut p = Palette::default();
        if self.kind == StyleKind::Recolor {
            p.hue_start += 160.0 * self.strength;
            p.value.0 -= 0.15 * self.strength;
        }
        p
    }

    fn texture(&self) -> f64 {
        if self.kind == StyleKind::Background {
            0.5 * self.strength
        } else {
            0.0
        }
    }

    fn blur(&self) -> f64 {
        if self.kind == StyleKind::Blur {
            1.5 * self.strength
        } else {
            0.0
        }
    }
}

/// Rotation pose at time `t` for a video of `kind` starting at `phase` degrees.
/// `spin` is the object's fixed in-plane orientation for screen-axis rotations.
pub fn rotation_pose(config: &SynthConfig, kind: VideoKind, phase: f64, spin: f64, t: f64) -> Pose {
    let (axis, dir) = kind.axis().expect("rotation kind");
    let angle = phase + dir * config.angular_velocity() * t;
    match axis {
        0 => Pose {
            spin,
            tilt_x: angle,
            tilt_y: 0.0,
        },
        1 => Pose {
            spin,
            tilt_x: 0.0,
            tilt_y: angle,
        },
        _ => Pose {
            spin: angle,
            tilt_x: 0.0,
            tilt_y: 0.0,
        },
    }
}

struct Source<'a> {
    config: &'a SynthConfig,
    instance_stream: u64,
    id_offset: u32,
    palette: Palette,
    texture: f64,
    blur: f64,
}

/// Render a dataset into `out_dir` and write its manifest.
pub fn generate(config: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    write_dataset(
        &Source {
            config,
            instance_stream: OBJECT_STREAM,
            id_offset: 0,
            palette: Palette::default(),
            texture: 0.0,
            blur: 0.0,
        },
        out_dir,
        None,
    )
}

/// Render a dataset with the same classes, fresh object instances (ids
/// disjoint from [`generate`]'s) and the given rendering shift.
pub fn generate_transfer(config: &SynthConfig, style: TransferStyle, out_dir: &Path) -> Result<Manifest> {
    if !(0.0..=1.0).contains(&style.strength) {
        return Err(Error::Config(format!("transfer strength {} outside [0, 1]", style.strength)));
    }
    write_dataset(
        &Source {
            config,
            instance_stream: TRANSFER_STREAM,
            id_offset: (config.num_classes * config.objects_per_class) as u32,
            palette: style.palette(),
            texture: style.texture(),
            blur: style.blur(),
        },
        out_dir,
        Some(style),
    )
}

#[derive(Serialize)]
struct Sidecar<'a> {
    synth: &'a SynthConfig,
    transfer: Option<TransferStyle>,
    angular_velocity_deg_per_s: f64,
    sequences: usize,
    frames: usize,
}

fn write_dataset(src: &Source, out_dir: &Path, style: Option<TransferStyle>) -> Result<Manifest> {
    let config = src.config;
    config.validate()?;
    let frames_dir = out_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut records = Vec::new();
    for class in 0..config.num_classes {
        for k in 0..config.objects_per_class {
            let local = (class * config.objects_per_class + k) as u32;
            let object_id = src.id_offset + local;
            let mut irng = rng::derived(config.seed, &[src.instance_stream, class as u64, k as u64]);
            let recipe = ObjectRecipe::sample(class, &src.palette, &mut irng);
            for v in 0..config.videos_per_object() {
                let video_id = object_id * config.videos_per_object() as u32 + v as u32;
                let kind = if v < config.rotations_per_object { ROTATION_ORDER[v] } else { VideoKind::Hodgepodge };
                records.extend(render_video(src, &recipe, class as u32, object_id, video_id, kind, &frames_dir)?);
            }
        }
    }
    let manifest = Manifest::with_timing(records, out_dir, config.fps, config.duration)?;
    dataio::write_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    let sidecar = Sidecar {
        synth: config,
        transfer: style,
        angular_velocity_deg_per_s: config.angular_velocity(),
        sequences: manifest.num_videos(),
        frames: manifest.len(),
    };
    let path = out_dir.join("generation.json");
    fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn render_video(
    src: &Source,
    recipe: &ObjectRecipe,
    class_id: u32,
    object_id: u32,
    video_id: u32,
    kind: VideoKind,
    frames_dir: &Path,
) -> Result<Vec<FrameRecord>> {
    let config = src.config;
    let seed = config.seed ^ src.instance_stream;
    let mut vrng = rng::derived(seed, &[VIDEO_STREAM, video_id as u64]);
    let phase = vrng.random_range(0.0..360.0);
    let spin = vrng.random_range(0.0..360.0);
    let hand_offset = vrng.random::<f64>();
    let jitter = 0.04 * config.image_size as f64;
    let scene = SceneStyle {
        texture: src.texture,
        texture_angle: vrng.random_range(0.0..180.0),
        blur: src.blur,
        offset: [vrng.random_range(-jitter..=jitter), vrng.random_range(-jitter..=jitter)],
    };
    let dir = frames_dir.join(format!("{video_id:06}"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let n = config.frames_per_video();
    let mut out = Vec::with_capacity(n);
    for f in 0..n {
        let t = f as f64 / config.fps;
        let mut frng = rng::derived(seed, &[FRAME_STREAM, video_id as u64, f as u64]);
        let (pose, hand) = if kind.is_rotation() {
            let hand = (hand_offset + 0.35 * (std::f64::consts::TAU * t / config.duration).sin()).rem_euclid(1.0);
            (rotation_pose(config, kind, phase, spin, t), hand)
        } else {
            let mut tilt = || frng.random_range(-HODGEPODGE_TILT..=HODGEPODGE_TILT);
            let (tilt_x, tilt_y) = (tilt(), tilt());
            let flip = if frng.random_bool(0.5) { 180.0 } else { 0.0 };
            let pose = Pose {
                spin: frng.random_range(0.0..360.0),
                tilt_x: tilt_x + flip,
                tilt_y,
            };
            (pose, frng.random::<f64>())
        };
        let occluder = config.occluder.then_some(hand);
        let frame = render_frame(recipe, pose, occluder, config.image_size, &scene, &mut frng);
        let name = format!("{f:04}.{}", config.image_format.extension());
        let path = dir.join(&name);
        let bytes = match config.image_format {
            ImageFormat::Ppm => dataio::encode_ppm(&frame.image),
            ImageFormat::Mvim => dataio::encode_mvim(&frame.image, dataio::MVIM_F32),
        };
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        out.push(FrameRecord {
            class_id,
            object_id,
            video_id,
            video_kind: kind,
            t,
            image: format!("frames/{video_id:06}/{name}"),
            bbox: frame.bbox,
        });
    }
    if let Some(rate) = config.bbox_annotation_fps {
        out = annotate_sparse(out, rate)?;
    }
    Ok(out)
}

/// Keep measured boxes at multiples of `1 / rate`, interpolate the frames
/// between measurements, and drop frames after the last one.
fn annotate_sparse(frames: Vec<FrameRecord>, rate: f64) -> Result<Vec<FrameRecord>> {
    let is_key = |t: f64| ((t * rate) - (t * rate).round()).abs() < 1e-6;
    let keys: Vec<(f64, BBox)> = frames.iter().filter(|r| is_key(r.t)).map(|r| (r.t, r.bbox)).collect();
    let last = keys.last().map_or(0.0, |k| k.0);
    let mut out = Vec::with_capacity(frames.len());
    for mut r in frames.into_iter().filter(|r| r.t <= last + 1e-9) {
        if !is_key(r.t) {
            let i = keys.iter().position(|k| k.0 > r.t).expect("a later key exists");
            let ((t1, b1), (t2, b2)) = (keys[i - 1], keys[i]);
            r.bbox = interpolate_bbox(b1, t1, b2, t2, r.t)?;
        }
        out.push(r);
    }
    Ok(out)
}
