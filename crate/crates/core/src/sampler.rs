//! Positive-pair selection.
//!
//! A [`PairingPolicy`] decides which frame may serve as the positive partner
//! of an anchor: the same frame, another frame of the same video (optionally
//! at a fixed or bounded temporal gap), any frame of the same object, or any
//! frame of the same class. Batches hold `2N` views ordered as consecutive
//! pairs, the layout expected by [`crate::contrastive`].

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentConfig};
use crate::dataio::{FrameRecord, Image, Manifest};
use crate::error::{Error, Result};
use crate::numcore::Array;
use crate::rng::Rng;

/// Tolerance for gaps reported with two decimals (0.67 s at 3 fps).
const GAP_SNAP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// Partner exactly `gap` away, before or after the anchor.
    Fixed,
    /// Partner at most `gap` away, never the anchor frame itself.
    Range,
}

impl std::str::FromStr for GapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(GapMode::Fixed),
            "range" => Ok(GapMode::Range),
            other => Err(Error::Unknown {
                kind: "gap mode",
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    pub mode: GapMode,
    pub gap_seconds: f64,
    pub fps: f64,
}

impl GapSpec {
    pub fn new(mode: GapMode, gap_seconds: f64, fps: f64) -> Result<Self> {
        let spec = GapSpec { mode, gap_seconds, fps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::UnsupportedFps(self.fps));
        }
        let frames = self.gap_seconds * self.fps;
        if !(self.gap_seconds >= 0.0) || (frames - frames.round()).abs() > GAP_SNAP {
            return Err(Error::Config(format!(
                "gap {} s is not a whole number of frames at {} fps",
                self.gap_seconds, self.fps
            )));
        }
        Ok(())
    }

    /// Gap in whole frames.
    pub fn offset(&self) -> i64 {
        (self.gap_seconds * self.fps).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Setting {
    /// Two views of one frame.
    #[serde(rename = "self")]
    SelfFrame,
    /// Two frames of one video; `gap: None` allows any other frame.
    Transform { gap: Option<GapSpec> },
    /// Two frames of one object, from any of its videos.
    Object,
    /// Two frames of one class, from any of its objects.
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingPolicy {
    pub setting: Setting,
    #[serde(default)]
    pub rotation_only: bool,
}

impl PairingPolicy {
    pub fn new(setting: Setting) -> Self {
        PairingPolicy {
            setting,
            rotation_only: false,
        }
    }

    /// Whether every positive is the anchor frame itself.
    pub fn is_identity(&self) -> bool {
        match self.setting {
            Setting::SelfFrame => true,
            Setting::Transform { gap: Some(g) } => g.offset() == 0,
            _ => false,
        }
    }

    fn admits(&self, r: &FrameRecord) -> bool {
        !self.rotation_only || r.video_kind.is_rotation()
    }

    /// Whether `partner` is a valid positive for `anchor` under this policy.
    pub fn accepts(&self, manifest: &Manifest, anchor: usize, partner: usize) -> bool {
        let (a, p) = (manifest.record(anchor), manifest.record(partner));
        if !self.admits(a) || !self.admits(p) {
            return false;
        }
        if self.is_identity() {
            return anchor == partner;
        }
        if anchor == partner {
            return false;
        }
        match self.setting {
            Setting::SelfFrame => unreachable!(),
            Setting::Transform { gap } => {
                let same = a.video_id == p.video_id;
                let d = (manifest.frame_index(a.t) - manifest.frame_index(p.t)).abs();
                same && match gap {
                    None => true,
                    Some(g) if g.mode == GapMode::Fixed => d == g.offset(),
                    Some(g) => d >= 1 && d <= g.offset(),
                }
            }
            Setting::Object => a.object_key() == p.object_key(),
            Setting::Class => a.class_id == p.class_id,
        }
    }

    fn check(&self, manifest: &Manifest) -> Result<()> {
        if let Setting::Transform { gap: Some(g) } = self.setting {
            g.validate()?;
            if (g.fps - manifest.fps()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "gap is defined at {} fps but the manifest runs at {} fps",
                    g.fps,
                    manifest.fps()
                )));
            }
        }
        Ok(())
    }

    fn candidates<'m>(&self, manifest: &'m Manifest, anchor: usize) -> &'m [usize] {
        let a = manifest.record(anchor);
        match self.setting {
            Setting::SelfFrame => &[],
            Setting::Transform { .. } => manifest.video_frames(a.video_id),
            Setting::Object => manifest.object_frames(a.class_id, a.object_id),
            Setting::Class => manifest.class_frames(a.class_id),
        }
    }
}

fn no_partner(r: &FrameRecord) -> Error {
    Error::NoPartner {
        class_id: r.class_id,
        object_id: r.object_id,
        video_id: r.video_id,
        t: r.t,
    }
}

/// Draw a partner for manifest frame `anchor` uniformly from the valid set.
pub fn sample_partner(manifest: &Manifest, anchor: usize, policy: &PairingPolicy, rng: &mut Rng) -> Result<usize> {
    sample_partner_excluding(manifest, anchor, policy, rng, &HashSet::new())
}

/// As [`sample_partner`], ignoring frames in `used`.
pub fn sample_partner_excluding(
    manifest: &Manifest,
    anchor: usize,
    policy: &PairingPolicy,
    rng: &mut Rng,
    used: &HashSet<usize>,
) -> Result<usize> {
    policy.check(manifest)?;
    let a = manifest.record(anchor);
    if !policy.admits(a) {
        return Err(no_partner(a));
    }
    if policy.is_identity() {
        return Ok(anchor);
    }
    let valid: Vec<usize> = policy
        .candidates(manifest, anchor)
        .iter()
        .copied()
        .filter(|&p| !used.contains(&p) && policy.accepts(manifest, anchor, p))
        .collect();
    valid.choose(rng).copied().ok_or_else(|| no_partner(a))
}

/// `2N` augmented views; rows `2k` and `2k + 1` form the `k`-th positive pair.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub images: Vec<Image>,
    /// Manifest index of each view's source frame.
    pub provenance: Vec<usize>,
}

impl PairBatch {
    pub fn pairs(&self) -> usize {
        self.provenance.len() / 2
    }

    pub fn to_array(&self) -> Result<Array> {
        augment::to_batch(&self.images)
    }
}

/// Pair every anchor, replacing anchors without a valid partner by fresh
/// frames. No frame is used twice unless the policy pairs a frame with itself.
pub fn pair_anchors(manifest: &Manifest, policy: &PairingPolicy, anchors: &[usize], rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    policy.check(manifest)?;
    let mut used: HashSet<usize> = anchors.iter().copied().collect();
    let eligible: Vec<usize> = (0..manifest.len()).filter(|&i| policy.admits(manifest.record(i))).collect();
    let mut pairs = Vec::with_capacity(anchors.len());
    let budget = 100 * anchors.len().max(1);
    let mut attempts = 0;
    for &first in anchors {
        let mut anchor = first;
        loop {
            match sample_partner_excluding(manifest, anchor, policy, rng, &used) {
                Ok(p) => {
                    used.insert(p);
                    pairs.push((anchor, p));
                    break;
                }
                Err(Error::NoPartner { .. }) => {
                    attempts += 1;
                    let fresh = eligible.iter().copied().filter(|i| !used.contains(i)).collect::<Vec<_>>();
                    match fresh.choose(rng) {
                        Some(&f) if attempts < budget => {
                            used.insert(f);
                            anchor = f;
                        }
                        _ => {
                            return Err(Error::Batch {
                                needed: anchors.len(),
                                available: pairs.len(),
                            })
                        }
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(pairs)
}

/// Augment both members of every pair with independent draws from `rng`.
pub fn augment_pairs(
    pairs: &[(usize, usize)],
    crops: &[Image],
    config: &AugmentConfig,
    rng: &mut Rng,
) -> Result<PairBatch> {
    let mut images = Vec::with_capacity(2 * pairs.len());
    let mut provenance = Vec::with_capacity(2 * pairs.len());
    for &(a, p) in pairs {
        for i in [a, p] {
            images.push(augment::apply(&crops[i], config, rng)?);
            provenance.push(i);
        }
    }
    Ok(PairBatch { images, provenance })
}

/// Draw `n` distinct anchors, pair them and augment the `2n` views.
/// `crops[i]` is the square object crop of manifest frame `i`.
pub fn build_batch(
    manifest: &Manifest,
    policy: &PairingPolicy,
    n: usize,
    rng: &mut Rng,
    crops: &[Image],
    config: &AugmentConfig,
) -> Result<PairBatch> {
    let eligible: Vec<usize> = (0..manifest.len()).filter(|&i| policy.admits(manifest.record(i))).collect();
    if n == 0 || eligible.len() < n {
        return Err(Error::Batch {
            needed: n,
            available: eligible.len(),
        });
    }
    let anchors: Vec<usize> = rand::seq::index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    let pairs = pair_anchors(manifest, policy, &anchors, rng)?;
    augment_pairs(&pairs, crops, config, rng)
}

/// Gaps swept at a frame rate: 0 to 10 frames in steps of 2, in seconds
/// rounded to two decimals.
pub fn gap_grid(fps: f64) -> Result<Vec<f64>> {
    if fps != 1.0 && fps != 3.0 {
        return Err(Error::UnsupportedFps(fps));
    }
    Ok((0..=10)
        .step_by(2)
        .map(|frames| (frames as f64 / fps * 100.0).round() / 100.0)
        .collect())
}

/// Uniform anchor order for one epoch.
pub fn shuffled_anchors(manifest: &Manifest, policy: &PairingPolicy, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..manifest.len()).filter(|&i| policy.admits(manifest.record(i))).collect();
    idx.shuffle(rng);
    idx
}
