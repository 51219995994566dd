use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

/// Which manipulation sequence a frame comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VideoKind {
    #[serde(rename = "rotation_x+")]
    RotationXPos,
    #[serde(rename = "rotation_y+")]
    RotationYPos,
    #[serde(rename = "rotation_z+")]
    RotationZPos,
    #[serde(rename = "rotation_x-")]
    RotationXNeg,
    #[serde(rename = "rotation_y-")]
    RotationYNeg,
    #[serde(rename = "rotation_z-")]
    RotationZNeg,
    #[serde(rename = "hodgepodge")]
    Hodgepodge,
}

impl VideoKind {
    /// The six axis rotations in a fixed order.
    pub const ROTATIONS: [VideoKind; 6] = [
        VideoKind::RotationXPos,
        VideoKind::RotationYPos,
        VideoKind::RotationZPos,
        VideoKind::RotationXNeg,
        VideoKind::RotationYNeg,
        VideoKind::RotationZNeg,
    ];

    pub fn is_rotation(self) -> bool {
        self != VideoKind::Hodgepodge
    }

    /// Rotation axis index (0 = x, 1 = y, 2 = z) and direction sign.
    pub fn axis(self) -> Option<(usize, f64)> {
        let i = Self::ROTATIONS.iter().position(|k| *k == self)?;
        Some((i % 3, if i < 3 { 1.0 } else { -1.0 }))
    }

    pub fn name(self) -> &'static str {
        match self {
            VideoKind::RotationXPos => "rotation_x+",
            VideoKind::RotationYPos => "rotation_y+",
            VideoKind::RotationZPos => "rotation_z+",
            VideoKind::RotationXNeg => "rotation_x-",
            VideoKind::RotationYNeg => "rotation_y-",
            VideoKind::RotationZNeg => "rotation_z-",
            VideoKind::Hodgepodge => "hodgepodge",
        }
    }
}

impl FromStr for VideoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ROTATIONS
            .into_iter()
            .chain([VideoKind::Hodgepodge])
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "video kind",
                value: s.to_string(),
            })
    }
}

/// One annotated frame. Serialized as one JSON object per manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub class_id: u32,
    pub object_id: u32,
    pub video_id: u32,
    pub video_kind: VideoKind,
    /// Seconds since the start of the video.
    pub t: f64,
    /// Path relative to the manifest's directory.
    pub image: String,
    pub bbox: BBox,
}

impl FrameRecord {
    pub fn object_key(&self) -> (u32, u32) {
        (self.class_id, self.object_id)
    }

    fn unique_key(&self) -> (u32, u32, u32, u64) {
        (self.class_id, self.object_id, self.video_id, self.t.to_bits())
    }
}

/// Validated, indexed collection of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<FrameRecord>,
    fps: f64,
    duration: f64,
    root: PathBuf,
    by_object: BTreeMap<(u32, u32), Vec<usize>>,
    by_video: BTreeMap<u32, Vec<usize>>,
    by_class: BTreeMap<u32, Vec<usize>>,
}

impl Manifest {
    /// Validate records and infer the frame rate from the smallest positive
    /// timestamp step inside any video (1 fps when no video has two frames).
    pub fn new(records: Vec<FrameRecord>, root: impl Into<PathBuf>) -> Result<Self> {
        let fps = infer_fps(&records);
        let duration = records.iter().map(|r| r.t).fold(0.0, f64::max) + 1.0 / fps;
        Self::with_timing(records, root, fps, duration)
    }

    pub fn with_timing(records: Vec<FrameRecord>, root: impl Into<PathBuf>, fps: f64, duration: f64) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::UnsupportedFps(fps));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !(r.bbox.w > 0.0 && r.bbox.h > 0.0) {
                return Err(Error::Config(format!("frame {} has a non-positive box size", r.image)));
            }
            if !(r.t >= 0.0) {
                return Err(Error::Config(format!("frame {} has negative time {}", r.image, r.t)));
            }
            if !seen.insert(r.unique_key()) {
                return Err(Error::DuplicateFrame {
                    class_id: r.class_id,
                    object_id: r.object_id,
                    video_id: r.video_id,
                    t: r.t,
                });
            }
        }
        let mut by_object: BTreeMap<_, Vec<usize>> = BTreeMap::new();
        let mut by_video: BTreeMap<_, Vec<usize>> = BTreeMap::new();
        let mut by_class: BTreeMap<_, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_object.entry(r.object_key()).or_default().push(i);
            by_video.entry(r.video_id).or_default().push(i);
            by_class.entry(r.class_id).or_default().push(i);
        }
        for frames in by_video.values_mut() {
            frames.sort_by(|&a, &b| records[a].t.total_cmp(&records[b].t));
        }
        Ok(Manifest {
            records,
            fps,
            duration,
            root: root.into(),
            by_object,
            by_video,
            by_class,
        })
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &FrameRecord {
        &self.records[i]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.records[i].image)
    }

    /// Integer frame position of a timestamp.
    pub fn frame_index(&self, t: f64) -> i64 {
        (t * self.fps).round() as i64
    }

    /// Frames of a video, ordered by time.
    pub fn video_frames(&self, video_id: u32) -> &[usize] {
        self.by_video.get(&video_id).map_or(&[], Vec::as_slice)
    }

    pub fn object_frames(&self, class_id: u32, object_id: u32) -> &[usize] {
        self.by_object.get(&(class_id, object_id)).map_or(&[], Vec::as_slice)
    }

    pub fn class_frames(&self, class_id: u32) -> &[usize] {
        self.by_class.get(&class_id).map_or(&[], Vec::as_slice)
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.by_class.keys().copied().collect()
    }

    /// Distinct `(class_id, object_id)` pairs in order.
    pub fn object_keys(&self) -> Vec<(u32, u32)> {
        self.by_object.keys().copied().collect()
    }

    pub fn video_ids(&self) -> Vec<u32> {
        self.by_video.keys().copied().collect()
    }

    pub fn num_videos(&self) -> usize {
        self.by_video.len()
    }

    pub fn num_objects(&self) -> usize {
        self.by_object.len()
    }

    /// Records at `indices`, keeping this manifest's timing and root.
    pub fn subset(&self, indices: &[usize]) -> Manifest {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::with_timing(records, self.root.clone(), self.fps, self.duration).expect("subset of a valid manifest")
    }

    pub fn filter(&self, mut keep: impl FnMut(&FrameRecord) -> bool) -> Manifest {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.records[i])).collect();
        self.subset(&idx)
    }

    pub fn rotation_only(&self) -> Manifest {
        self.filter(|r| r.video_kind.is_rotation())
    }

    /// Same records with class ids replaced through `map` (used for relabeling checks).
    pub fn relabeled(&self, map: impl Fn(u32) -> u32) -> Manifest {
        let records = self
            .records
            .iter()
            .map(|r| FrameRecord {
                class_id: map(r.class_id),
                ..r.clone()
            })
            .collect();
        Self::with_timing(records, self.root.clone(), self.fps, self.duration).expect("relabeling preserves validity")
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r)?).expect("writing to a String");
        }
        Ok(out)
    }
}

fn infer_fps(records: &[FrameRecord]) -> f64 {
    let mut times: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in records {
        times.entry(r.video_id).or_default().push(r.t);
    }
    let mut step = f64::INFINITY;
    for ts in times.values_mut() {
        ts.sort_by(f64::total_cmp);
        for w in ts.windows(2) {
            let d = w[1] - w[0];
            if d > 1e-9 {
                step = step.min(d);
            }
        }
    }
    if step.is_finite() {
        (1e6 / step).round() / 1e6
    } else {
        1.0
    }
}

/// Parse JSON Lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<FrameRecord>> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Read and validate a manifest. Image paths resolve against the file's directory
/// and must exist.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_manifest(&text, path)?;
    if records.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = Manifest::new(records, root)?;
    for i in 0..manifest.len() {
        let p = manifest.image_path(i);
        if !p.is_file() {
            return Err(Error::MissingImage(p));
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    fs::write(path, manifest.to_jsonl()?).map_err(|e| Error::io(path, e))
}
